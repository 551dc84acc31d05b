//! End-to-end runs of the compiled binary against a generated fixture
//! corpus: exit codes, artifact layout, and idempotence.

use std::path::Path;
use std::process::{Command, Output};

use plausrank::synthetic::{write_essay_fixture, FixturePlan, FIXTURE_SPLIT_FILE};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plausrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

/// Write the tiny corpus and a fast JSON configuration; returns the config
/// file path.
fn setup(root: &Path) -> String {
    let corpus = root.join("corpus");
    write_essay_fixture(&corpus, &FixturePlan::tiny()).unwrap();
    let config = serde_json::json!({
        "corpus_dir": corpus,
        "split_table_path": corpus.join(FIXTURE_SPLIT_FILE),
        "mode": "ESSAY_CONTENT",
        "connectors": ["M/H"],
        "provider": "test",
        "embed_dim": 16,
        "hidden_size": 8,
        "attention_heads": 2,
        "train": {"learning_rate": 0.01, "batch_size": 4, "max_epochs": 1, "runs": 1},
        "output_dir": root.join("out"),
        "dev_relations": 2
    });
    let path = root.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path.to_string_lossy().to_string()
}

#[test]
fn full_chain_runs_clean_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out_dir = dir.path().join("out");

    let prepare = run(&["prepare", "--config", &config]);
    assert!(prepare.status.success(), "prepare: {}", stderr(&prepare));
    let text = stdout(&prepare);
    assert!(text.contains("3 documents"), "stdout: {text}");
    assert!(text.contains("12 relations"), "stdout: {text}");

    let embed = run(&["embed", "--config", &config]);
    assert!(embed.status.success(), "embed: {}", stderr(&embed));
    assert!(out_dir.join("cache").is_dir());

    let train = run(&["train", "--config", &config]);
    assert!(train.status.success(), "train: {}", stderr(&train));
    assert!(out_dir
        .join("runs/basic/MH/run0/checkpoint/params.bin")
        .is_file());
    assert!(stdout(&train).contains("best dev macro F1"));

    let eval = run(&["eval", "--config", &config]);
    assert!(eval.status.success(), "eval: {}", stderr(&eval));
    let text = stdout(&eval);
    assert!(text.contains("macro F1"), "stdout: {text}");
    assert!(text.contains("majority"), "stdout: {text}");

    let report = run(&["report", "--config", &config]);
    assert!(report.status.success(), "report: {}", stderr(&report));
    assert!(out_dir.join("reports/basic/metrics_table.csv").is_file());
    assert!(out_dir
        .join("reports/basic/coefficients_MH_scatter.svg")
        .is_file());
}

#[test]
fn rerunning_eval_reproduces_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    for step in ["prepare", "embed", "train"] {
        let out = run(&[step, "--config", &config]);
        assert!(out.status.success(), "{step}: {}", stderr(&out));
    }
    let metrics = dir.path().join("out/reports/basic/MH_metrics.csv");
    let predictions = dir
        .path()
        .join("out/reports/basic/MH_run0_predictions.jsonl");

    assert!(run(&["eval", "--config", &config]).status.success());
    let metrics_first = std::fs::read(&metrics).unwrap();
    let predictions_first = std::fs::read(&predictions).unwrap();

    assert!(run(&["eval", "--config", &config]).status.success());
    assert_eq!(std::fs::read(&metrics).unwrap(), metrics_first);
    assert_eq!(std::fs::read(&predictions).unwrap(), predictions_first);
}

#[test]
fn ablation_flags_route_to_their_own_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    for step in ["prepare", "embed"] {
        assert!(run(&[step, "--config", &config]).status.success());
    }
    let train = run(&["train", "--config", &config, "--no-att"]);
    assert!(train.status.success(), "train: {}", stderr(&train));
    assert!(dir
        .path()
        .join("out/runs/no-att/MH/run0/checkpoint/params.bin")
        .is_file());
}

#[test]
fn exit_codes_distinguish_config_data_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());

    // Data error: predecessor artifact missing.
    let eval = run(&["eval", "--config", &config]);
    assert_eq!(eval.status.code(), Some(2), "stderr: {}", stderr(&eval));
    assert!(stderr(&eval).contains("prepare"));

    // Config errors: unknown connector, unknown provider value, bad flag.
    let bad_connector = run(&["train", "--config", &config, "--connector", "Q/Q"]);
    assert_eq!(bad_connector.status.code(), Some(1));
    let bad_provider = run(&["embed", "--config", &config, "--provider", "bogus"]);
    assert_eq!(bad_provider.status.code(), Some(1));
    let bad_flag = run(&["prepare", "--config", &config, "--frobnicate"]);
    assert_eq!(bad_flag.status.code(), Some(1));

    // Missing config file.
    let no_file = run(&["prepare", "--config", "/nonexistent.json"]);
    assert_eq!(no_file.status.code(), Some(1));

    // Help and version return success.
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn train_flag_overrides_narrow_the_connector_set() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    for step in ["prepare", "embed"] {
        assert!(run(&[step, "--config", &config]).status.success());
    }
    // The config lists M/H; the flag retargets training to Y/N only.
    let train = run(&["train", "--config", &config, "--connector", "YN"]);
    assert!(train.status.success(), "train: {}", stderr(&train));
    assert!(dir.path().join("out/runs/basic/YN/run0").is_dir());
    assert!(!dir.path().join("out/runs/basic/MH/run0").exists());
}
