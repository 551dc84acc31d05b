//! Command-line entry point: prepare → embed → train → eval → ablate →
//! report, all driven by one JSON configuration plus flag overrides.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use plausrank::corpus::ViewMode;
use plausrank::eval::format_mean_std;
use plausrank::pipeline::{
    cmd_ablate, cmd_embed, cmd_eval, cmd_prepare, cmd_report, cmd_train, load_config,
    ConfigOverrides, PipelineConfig, PipelineError, ProviderKind,
};

#[derive(Parser)]
#[command(
    name = "plausrank",
    version,
    about = "Support/attack relation classification by ranking connector plausibility"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Task view: ESSAY or ESSAY_CONTENT.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<ViewMode>,

    /// Connector pair abbreviation: AA, AD, MH, YN, or NODISC.
    #[arg(long, global = true)]
    connector: Option<String>,

    /// Number of training runs (seeds seed, seed+1, ...).
    #[arg(long, global = true, value_name = "N")]
    runs: Option<usize>,

    /// Base seed for the dev split and the training runs.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory for every artifact.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Embedding backend: reference, elmo-style, or test.
    #[arg(long, global = true, value_parser = parse_provider)]
    provider: Option<ProviderKind>,

    /// Disable the learned span-coefficient scaling.
    #[arg(long, global = true)]
    no_coeff: bool,

    /// Disable attention; pool by last-state concatenation.
    #[arg(long, global = true)]
    no_att: bool,

    /// Use the unclamped ranking loss instead of the hinge.
    #[arg(long, global = true)]
    no_hinge: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the corpus, build the task view, and draw the data split.
    Prepare,
    /// Populate the embedding cache for every configured connector.
    Embed,
    /// Train checkpoints (all configured connectors, or just --connector).
    Train,
    /// Evaluate trained checkpoints: single models, vote, majority baseline.
    Eval,
    /// Train and evaluate the full ablation grid.
    Ablate,
    /// Consolidate metrics tables and export learned coefficients.
    Report,
}

fn parse_mode(raw: &str) -> Result<ViewMode, String> {
    ViewMode::parse(raw).ok_or_else(|| format!("unknown mode {raw:?}; use ESSAY or ESSAY_CONTENT"))
}

fn parse_provider(raw: &str) -> Result<ProviderKind, String> {
    ProviderKind::parse(raw)
        .ok_or_else(|| format!("unknown provider {raw:?}; use reference, elmo-style, or test"))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let overrides = ConfigOverrides {
        mode: cli.mode,
        connector: cli.connector,
        runs: cli.runs,
        seed: cli.seed,
        out: cli.out,
        provider: cli.provider,
        no_coeff: cli.no_coeff,
        no_att: cli.no_att,
        no_hinge: cli.no_hinge,
    };
    let config = load_config(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Prepare => prepare(&config),
        Command::Embed => embed(&config),
        Command::Train => train(&config),
        Command::Eval => eval(&config),
        Command::Ablate => ablate(&config),
        Command::Report => report(&config),
    }
}

fn prepare(config: &PipelineConfig) -> Result<(), PipelineError> {
    let summary = cmd_prepare(config)?;
    println!(
        "prepared {} documents, {} relations ({} support / {} attack)",
        summary.stats.essay_count,
        summary.stats.relation_count,
        summary.stats.support_count,
        summary.stats.attack_count
    );
    println!(
        "view {} with {} instances; split train/dev/test = {}/{}/{}",
        config.mode.as_str(),
        summary.view_instances,
        summary.train_relations,
        summary.dev_relations,
        summary.test_relations
    );
    Ok(())
}

fn embed(config: &PipelineConfig) -> Result<(), PipelineError> {
    let summary = cmd_embed(config)?;
    println!(
        "embedded {} reading texts ({} instances x {} connectors x 2) into {}",
        summary.texts_embedded,
        summary.instances,
        summary.connectors,
        config.output_dir.join("cache").display()
    );
    Ok(())
}

fn train(config: &PipelineConfig) -> Result<(), PipelineError> {
    for abbrev in config.connectors.clone() {
        let summary = cmd_train(config, &abbrev)?;
        let dev: Vec<String> = summary
            .best_dev_macro_f1
            .iter()
            .zip(&summary.best_epochs)
            .map(|(f1, epoch)| format!("{f1:.1} (epoch {epoch})"))
            .collect();
        println!(
            "trained {} [{}] seeds {:?}: best dev macro F1 {}",
            summary.connector,
            summary.column,
            summary.seeds,
            dev.join(", ")
        );
    }
    Ok(())
}

fn eval(config: &PipelineConfig) -> Result<(), PipelineError> {
    let outcome = cmd_eval(config, &config.connectors)?;
    println!("test metrics [{}]:", outcome.column);
    for row in &outcome.rows {
        println!(
            "  {:<8} macro F1 {}",
            row.name,
            format_mean_std(row.summary.mean.macro_f1, row.summary.std.macro_f1)
        );
    }
    Ok(())
}

fn ablate(config: &PipelineConfig) -> Result<(), PipelineError> {
    let summary = cmd_ablate(config)?;
    println!(
        "ablation grid over {:?} x {:?} written to {}",
        summary.rows,
        summary.columns,
        summary.grid_path.display()
    );
    Ok(())
}

fn report(config: &PipelineConfig) -> Result<(), PipelineError> {
    let summary = cmd_report(config)?;
    println!("metrics table: {}", summary.metrics_table.display());
    for path in &summary.coefficient_files {
        println!("coefficients: {}", path.display());
    }
    Ok(())
}
