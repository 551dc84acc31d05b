//! Pipeline orchestration: configuration, artifact layout, and the command
//! implementations behind the CLI.
//!
//! Every artifact lands under `output_dir`:
//!
//! ```text
//! manifest.json                    configuration hash, seeds, completed steps
//! view.jsonl / split.json / corpus_stats.json      (prepare)
//! cache/                           embedding cache   (embed)
//! runs/<column>/<conn>/run<seed>/  checkpoint + epoch log (train, ablate)
//! reports/<column>/                metrics CSVs, predictions, summaries (eval)
//! reports/ablation_grid.csv        cross-column grid (ablate)
//! reports/<column>/metrics_table.csv + coefficients_*  (report)
//! ```
//!
//! Commands are idempotent for a fixed configuration and seed: rerunning one
//! rewrites its artifacts with identical bytes, except the wall-clock column
//! of epoch logs, which records real elapsed time.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::corpus::{
    build_view, corpus_stats, load_corpus_dir, make_split, read_split_table, read_view_jsonl,
    write_view_jsonl, CorpusError, CorpusStats, CorpusView, DataSplit, RelationLabel,
    SentencePolicy, ViewInstance, ViewMode,
};
use crate::embed::{
    CachingProvider, EmbedError, EmbeddingProvider, HashEmbedder, RemoteProvider,
    TokenEmbeddingSequence,
};
use crate::eval::{
    ablation_grid, aggregate_metrics, classify_all, coefficient_scatter_svg, compute_metrics,
    export_coefficients, majority_baseline_predictions, metrics_table_csv, predictions_to_jsonl,
    vote, AblationCell, EnsembleConfig, EvalError, MetricsSummary, Prediction,
};
use crate::model::{EncoderConfig, ModelError};
use crate::reconstruct::{
    build_minimal_pair, connector_by_abbrev, ConnectorPair, ProperNounGuard, ReconstructError,
};
use crate::train::{
    epoch_log_csv, load_checkpoint, save_checkpoint, train_run, EmbeddedPair, TrainConfig,
    TrainError,
};

/// Write bytes to a temp file in the destination directory, then rename into
/// place. Readers never observe a torn file; concurrent writers last-win.
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_string_atomic(path: &Path, content: &str) -> std::io::Result<()> {
    write_bytes_atomic(path, content.as_bytes())
}

// ---------------------------------------------------------------------------
// Errors.
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing artifact {what} at {path}: {hint}")]
    MissingArtifact {
        what: &'static str,
        path: PathBuf,
        hint: &'static str,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code class: 1 configuration, 2 data, 3 runtime/numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid(_) => 1,
            PipelineError::MissingArtifact { .. } | PipelineError::Corpus(_) => 2,
            _ => 3,
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

/// Embedding backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    /// Remote contextual embedder, last-4-layer averaging.
    Reference,
    /// Remote contextual embedder, all-layer averaging.
    ElmoStyle,
    /// Local deterministic hashing embedder.
    Test,
}

impl ProviderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProviderKind::Reference => "reference",
            ProviderKind::ElmoStyle => "elmo-style",
            ProviderKind::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<ProviderKind> {
        match s.to_ascii_lowercase().as_str() {
            "reference" => Some(ProviderKind::Reference),
            "elmo-style" | "elmo_style" | "elmostyle" => Some(ProviderKind::ElmoStyle),
            "test" => Some(ProviderKind::Test),
            _ => None,
        }
    }
}

mod provider_serde {
    use super::ProviderKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &ProviderKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ProviderKind, D::Error> {
        let raw = String::deserialize(d)?;
        ProviderKind::parse(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown provider {raw:?}")))
    }
}

mod mode_serde {
    use super::ViewMode;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &ViewMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ViewMode, D::Error> {
        let raw = String::deserialize(d)?;
        ViewMode::parse(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown mode {raw:?}")))
    }
}

/// Seed of the deterministic test embedder; fixed so cache entries and runs
/// are comparable across configurations.
const TEST_PROVIDER_SEED: u64 = 1311;
/// Seed of the alternative test embedder used as the ablation's second
/// embedding space.
const ALT_TEST_PROVIDER_SEED: u64 = 2622;

/// Full pipeline configuration: a JSON file with this schema, field defaults
/// applied per missing key, then flag overrides on top (flags win).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Directory of `<id>.txt` / `<id>.ann` essay pairs.
    pub corpus_dir: PathBuf,
    /// Train/test partition table shipped with the corpus.
    pub split_table_path: PathBuf,
    #[serde(with = "mode_serde")]
    pub mode: ViewMode,
    /// Connector-pair abbreviations evaluated and ablated, e.g. `["M/H"]`.
    pub connectors: Vec<String>,
    #[serde(with = "provider_serde")]
    pub provider: ProviderKind,
    /// Endpoint URL, required for the remote providers.
    pub provider_endpoint: Option<String>,
    /// Embedding width of the test provider and the elmo-style provider.
    pub embed_dim: usize,
    /// Recurrent units per direction.
    pub hidden_size: usize,
    pub attention_heads: usize,
    /// Span-coefficient scaling on/off (off = the -coeff ablation).
    pub use_coefficients: bool,
    /// Attention + learned pooling on/off (off = the -att ablation).
    pub use_attention: bool,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    /// Base seed: run r trains with seed_base + r; the dev split is drawn
    /// with this seed as well.
    pub seed_base: u64,
    /// Target relation count of the held-out dev partition.
    pub dev_relations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: PathBuf::from("corpus"),
            split_table_path: PathBuf::from("corpus/train-test-split.csv"),
            mode: ViewMode::Essay,
            connectors: ["A/A", "A/D", "M/H", "Y/N", "NO-DISC"]
                .map(String::from)
                .to_vec(),
            provider: ProviderKind::Test,
            provider_endpoint: None,
            embed_dim: 64,
            hidden_size: 256,
            attention_heads: 4,
            use_coefficients: true,
            use_attention: true,
            train: TrainConfig::default(),
            output_dir: PathBuf::from("out"),
            seed_base: 0,
            dev_relations: 1149,
        }
    }
}

/// Flag-level overrides; `None`/`false` leaves the file value in place.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub mode: Option<ViewMode>,
    pub connector: Option<String>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub provider: Option<ProviderKind>,
    pub no_coeff: bool,
    pub no_att: bool,
    pub no_hinge: bool,
}

/// Load the effective configuration: defaults, then the JSON file if given,
/// then flag overrides. The result is validated.
pub fn load_config(
    path: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<PipelineConfig, PipelineError> {
    let mut config = match path {
        None => PipelineConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                PipelineError::ConfigInvalid(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::ConfigInvalid(format!("config {}: {e}", p.display())))?
        }
    };
    if let Some(mode) = overrides.mode {
        config.mode = mode;
    }
    if let Some(connector) = &overrides.connector {
        config.connectors = vec![connector.clone()];
    }
    if let Some(runs) = overrides.runs {
        config.train.runs = runs;
    }
    if let Some(seed) = overrides.seed {
        config.seed_base = seed;
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(provider) = overrides.provider {
        config.provider = provider;
    }
    if overrides.no_coeff {
        config.use_coefficients = false;
    }
    if overrides.no_att {
        config.use_attention = false;
    }
    if overrides.no_hinge {
        config.train.hinge = false;
    }
    // The pipeline seed is authoritative; the train section's copy follows it.
    config.train.seed_base = config.seed_base;
    config.validate()?;
    Ok(config)
}

impl PipelineConfig {
    /// Fail fast on anything that would waste a run: missing inputs, unknown
    /// names, or degenerate numeric settings.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |msg: String| Err(PipelineError::ConfigInvalid(msg));
        if !self.corpus_dir.is_dir() {
            return invalid(format!(
                "corpus_dir {} is not a directory",
                self.corpus_dir.display()
            ));
        }
        if !self.split_table_path.is_file() {
            return invalid(format!(
                "split_table_path {} is not a file",
                self.split_table_path.display()
            ));
        }
        if self.connectors.is_empty() {
            return invalid("connectors list is empty".to_string());
        }
        for abbrev in &self.connectors {
            connector_by_abbrev(abbrev).map_err(|_| {
                PipelineError::ConfigInvalid(format!("unknown connector {abbrev:?}"))
            })?;
        }
        if self.provider != ProviderKind::Test && self.provider_endpoint.is_none() {
            return invalid(format!(
                "provider {:?} needs provider_endpoint",
                self.provider.as_str()
            ));
        }
        if self.embed_dim == 0 {
            return invalid("embed_dim must be positive".to_string());
        }
        if self.hidden_size == 0 {
            return invalid("hidden_size must be positive".to_string());
        }
        if self.attention_heads == 0 || (2 * self.hidden_size) % self.attention_heads != 0 {
            return invalid(format!(
                "attention_heads {} must divide the encoder width {}",
                self.attention_heads,
                2 * self.hidden_size
            ));
        }
        if self.train.batch_size == 0 {
            return invalid("train.batch_size must be positive".to_string());
        }
        if self.train.runs == 0 {
            return invalid("train.runs must be at least 1".to_string());
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return invalid("train.learning_rate must be positive and finite".to_string());
        }
        if !self.train.margin.is_finite() {
            return invalid("train.margin must be finite".to_string());
        }
        Ok(())
    }

    /// Hash of the artifact-shaping settings. The connector list and the
    /// output directory are excluded: different connectors and runs coexist
    /// under one output directory without invalidating each other.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Core<'a> {
            corpus_dir: &'a Path,
            split_table_path: &'a Path,
            mode: &'a str,
            provider: &'a str,
            provider_endpoint: &'a Option<String>,
            embed_dim: usize,
            hidden_size: usize,
            attention_heads: usize,
            train: TrainBody,
            seed_base: u64,
            dev_relations: usize,
        }
        // Per-run identity: everything but the run count, so extending the
        // seed range never orphans earlier artifacts.
        #[derive(Serialize)]
        struct TrainBody {
            learning_rate: f64,
            batch_size: usize,
            max_epochs: usize,
            margin: f64,
            hinge: bool,
        }
        let core = Core {
            corpus_dir: &self.corpus_dir,
            split_table_path: &self.split_table_path,
            mode: self.mode.as_str(),
            provider: self.provider.as_str(),
            provider_endpoint: &self.provider_endpoint,
            embed_dim: self.embed_dim,
            hidden_size: self.hidden_size,
            attention_heads: self.attention_heads,
            train: TrainBody {
                learning_rate: self.train.learning_rate,
                batch_size: self.train.batch_size,
                max_epochs: self.train.max_epochs,
                margin: self.train.margin,
                hinge: self.train.hinge,
            },
            seed_base: self.seed_base,
            dev_relations: self.dev_relations,
        };
        let json = serde_json::to_string(&core).expect("config core serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The seeds the configured runs train with.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.train.runs as u64)
            .map(|r| self.seed_base + r)
            .collect()
    }

    fn encoder_base(&self, d_input: usize) -> EncoderConfig {
        EncoderConfig {
            use_coefficients: self.use_coefficients,
            use_attention: self.use_attention,
            d_input,
            hidden: self.hidden_size,
            n_heads: self.attention_heads,
            seed: self.seed_base,
        }
    }

    /// Ablation-column label of this configuration's encoder toggles.
    pub fn column_label(&self) -> &'static str {
        match (self.use_coefficients, self.use_attention) {
            (true, true) => "basic",
            (false, true) => "-coeff",
            (true, false) => "-att",
            (false, false) => "-coeff-att",
        }
    }
}

// ---------------------------------------------------------------------------
// Providers.
// ---------------------------------------------------------------------------

/// Concrete provider dispatch without trait objects.
pub enum AnyProvider {
    Hash(HashEmbedder),
    Remote(RemoteProvider),
}

impl EmbeddingProvider for AnyProvider {
    fn provider_id(&self) -> String {
        match self {
            AnyProvider::Hash(p) => p.provider_id(),
            AnyProvider::Remote(p) => p.provider_id(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            AnyProvider::Hash(p) => p.dim(),
            AnyProvider::Remote(p) => p.dim(),
        }
    }

    fn embed_text(
        &self,
        text: &str,
        span_char_ranges: [(usize, usize); 3],
    ) -> Result<TokenEmbeddingSequence, EmbedError> {
        match self {
            AnyProvider::Hash(p) => p.embed_text(text, span_char_ranges),
            AnyProvider::Remote(p) => p.embed_text(text, span_char_ranges),
        }
    }
}

fn base_provider(config: &PipelineConfig) -> Result<AnyProvider, PipelineError> {
    let endpoint = || {
        config.provider_endpoint.clone().ok_or_else(|| {
            PipelineError::ConfigInvalid("remote provider needs provider_endpoint".to_string())
        })
    };
    Ok(match config.provider {
        ProviderKind::Test => {
            AnyProvider::Hash(HashEmbedder::new(TEST_PROVIDER_SEED, config.embed_dim))
        }
        ProviderKind::Reference => AnyProvider::Remote(RemoteProvider::reference(endpoint()?)),
        ProviderKind::ElmoStyle => {
            AnyProvider::Remote(RemoteProvider::elmo_style(endpoint()?, config.embed_dim))
        }
    })
}

/// The second embedding space of the alt-embedder ablation column: the other
/// remote provider, or a differently seeded hashing embedder under test.
fn alt_provider(config: &PipelineConfig) -> Result<AnyProvider, PipelineError> {
    let endpoint = || {
        config.provider_endpoint.clone().ok_or_else(|| {
            PipelineError::ConfigInvalid("remote provider needs provider_endpoint".to_string())
        })
    };
    Ok(match config.provider {
        ProviderKind::Test => {
            AnyProvider::Hash(HashEmbedder::new(ALT_TEST_PROVIDER_SEED, config.embed_dim))
        }
        ProviderKind::Reference => {
            AnyProvider::Remote(RemoteProvider::elmo_style(endpoint()?, config.embed_dim))
        }
        ProviderKind::ElmoStyle => AnyProvider::Remote(RemoteProvider::reference(endpoint()?)),
    })
}

fn caching_provider(
    config: &PipelineConfig,
    alt: bool,
) -> Result<CachingProvider<AnyProvider>, PipelineError> {
    let inner = if alt {
        alt_provider(config)?
    } else {
        base_provider(config)?
    };
    Ok(CachingProvider::new(
        inner,
        config.output_dir.join("cache"),
    )?)
}

// ---------------------------------------------------------------------------
// Artifact paths and the manifest.
// ---------------------------------------------------------------------------

/// Filesystem-safe connector abbreviation: `M/H` → `MH`, `NO-DISC` → `NODISC`.
pub fn fs_abbrev(abbrev: &str) -> String {
    abbrev.to_ascii_uppercase().replace(['/', '-'], "")
}

/// Filesystem-safe ablation column name: `-att` → `no-att`.
fn fs_column(column: &str) -> String {
    match column {
        "basic" => "basic".to_string(),
        "alt-embedder" => "alt-embedder".to_string(),
        other => format!("no{other}"),
    }
}

fn view_path(config: &PipelineConfig) -> PathBuf {
    config.output_dir.join("view.jsonl")
}

fn split_path(config: &PipelineConfig) -> PathBuf {
    config.output_dir.join("split.json")
}

fn run_dir(config: &PipelineConfig, column: &str, abbrev: &str, seed: u64) -> PathBuf {
    config
        .output_dir
        .join("runs")
        .join(fs_column(column))
        .join(fs_abbrev(abbrev))
        .join(format!("run{seed}"))
}

fn reports_dir(config: &PipelineConfig, column: &str) -> PathBuf {
    config.output_dir.join("reports").join(fs_column(column))
}

/// Reproducibility record: the configuration hash and the seeds suffice to
/// regenerate every artifact (modulo wall-clock log columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: PipelineConfig,
    pub run_seeds: Vec<u64>,
    pub completed: BTreeSet<String>,
}

fn manifest_path(config: &PipelineConfig) -> PathBuf {
    config.output_dir.join("manifest.json")
}

/// Load the output directory's manifest, enforcing configuration agreement,
/// and record `command` as completed.
fn update_manifest(config: &PipelineConfig, command: &str) -> Result<(), PipelineError> {
    let path = manifest_path(config);
    let hash = config.config_hash();
    let mut manifest = if path.is_file() {
        let text = std::fs::read_to_string(&path)?;
        let existing: Manifest = serde_json::from_str(&text).map_err(|e| {
            PipelineError::ConfigInvalid(format!("corrupt manifest {}: {e}", path.display()))
        })?;
        if existing.config_hash != hash {
            return Err(PipelineError::ConfigInvalid(format!(
                "output dir {} was produced under a different configuration \
                 (hash {} vs {}); use a fresh --out or the original settings",
                config.output_dir.display(),
                existing.config_hash,
                hash
            )));
        }
        existing
    } else {
        Manifest {
            config_hash: hash,
            config: config.clone(),
            run_seeds: Vec::new(),
            completed: BTreeSet::new(),
        }
    };
    // The manifest echoes the latest compatible config (the hash pins the
    // artifact-shaping core; connectors and run count may legitimately grow).
    manifest.config = config.clone();
    manifest.run_seeds = config.run_seeds();
    manifest.completed.insert(command.to_string());
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_string_atomic(&path, &json)?;
    Ok(())
}

/// Guard that a predecessor artifact exists before doing any work.
fn require_artifact(
    path: &Path,
    what: &'static str,
    hint: &'static str,
) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact {
            what,
            path: path.to_path_buf(),
            hint,
        })
    }
}

// ---------------------------------------------------------------------------
// Shared task loading.
// ---------------------------------------------------------------------------

struct TaskData {
    view: CorpusView,
    split: DataSplit,
}

impl TaskData {
    fn load(config: &PipelineConfig) -> Result<TaskData, PipelineError> {
        require_artifact(
            &view_path(config),
            "task view",
            "run the prepare command first",
        )?;
        require_artifact(
            &split_path(config),
            "data split",
            "run the prepare command first",
        )?;
        let view = read_view_jsonl(&view_path(config))?;
        let text = std::fs::read_to_string(split_path(config))?;
        let split: DataSplit = serde_json::from_str(&text)
            .map_err(|e| PipelineError::ConfigInvalid(format!("corrupt split.json: {e}")))?;
        Ok(TaskData { view, split })
    }

    fn partition<'a>(&'a self, ids: &[String]) -> Vec<&'a ViewInstance> {
        let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        self.view
            .instances
            .iter()
            .filter(|inst| wanted.contains(inst.rel_id.as_str()))
            .collect()
    }

    fn gold_of<'a>(&self, instances: &[&'a ViewInstance]) -> BTreeMap<String, RelationLabel> {
        instances
            .iter()
            .map(|inst| (inst.rel_id.clone(), inst.label))
            .collect()
    }
}

/// Capitalization evidence for the lowercasing guard comes from the texts the
/// view exposes for this instance, keeping the task views airtight.
fn instance_guard(instance: &ViewInstance) -> ProperNounGuard {
    ProperNounGuard::from_text(&format!(
        "{}\n{}",
        instance.target_text, instance.source_text
    ))
}

fn embed_instances(
    instances: &[&ViewInstance],
    connector: &ConnectorPair,
    provider: &CachingProvider<AnyProvider>,
) -> Result<Vec<EmbeddedPair>, PipelineError> {
    instances
        .iter()
        .map(|inst| {
            let pair = build_minimal_pair(inst, connector, &instance_guard(inst))?;
            Ok(EmbeddedPair::from_minimal_pair(&pair, provider)?)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// prepare.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrepareSummary {
    pub stats: CorpusStats,
    pub view_instances: usize,
    pub train_relations: usize,
    pub dev_relations: usize,
    pub test_relations: usize,
}

/// Parse the corpus, materialize the configured task view, and draw the
/// document-atomic dev split.
pub fn cmd_prepare(config: &PipelineConfig) -> Result<PrepareSummary, PipelineError> {
    let docs = load_corpus_dir(&config.corpus_dir)?;
    let stats = corpus_stats(&docs);
    let test_docs = read_split_table(&config.split_table_path)?;
    let view = build_view(&docs, config.mode, &SentencePolicy::default());
    let split = make_split(&docs, &test_docs, config.dev_relations, config.seed_base)?;

    write_view_jsonl(&view, &view_path(config))?;
    let split_json = serde_json::to_string_pretty(&split).expect("split serializes");
    write_string_atomic(&split_path(config), &split_json)?;
    let stats_json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    write_string_atomic(&config.output_dir.join("corpus_stats.json"), &stats_json)?;
    update_manifest(config, "prepare")?;

    Ok(PrepareSummary {
        view_instances: view.instances.len(),
        train_relations: split.train.len(),
        dev_relations: split.dev.len(),
        test_relations: split.test.len(),
        stats,
    })
}

// ---------------------------------------------------------------------------
// embed.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EmbedSummary {
    pub instances: usize,
    pub connectors: usize,
    /// Reading texts pushed through the cache (two per instance and
    /// connector).
    pub texts_embedded: usize,
}

/// Push every reading of every configured connector through the embedding
/// cache, so later commands only read.
pub fn cmd_embed(config: &PipelineConfig) -> Result<EmbedSummary, PipelineError> {
    let task = TaskData::load(config)?;
    let provider = caching_provider(config, false)?;
    let mut texts = 0usize;
    for abbrev in &config.connectors {
        let connector = connector_by_abbrev(abbrev)
            .map_err(|_| PipelineError::ConfigInvalid(format!("unknown connector {abbrev:?}")))?;
        for inst in &task.view.instances {
            let pair = build_minimal_pair(inst, &connector, &instance_guard(inst))?;
            EmbeddedPair::from_minimal_pair(&pair, &provider)?;
            texts += 2;
        }
    }
    update_manifest(config, "embed")?;
    Ok(EmbedSummary {
        instances: task.view.instances.len(),
        connectors: config.connectors.len(),
        texts_embedded: texts,
    })
}

// ---------------------------------------------------------------------------
// train.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub connector: String,
    pub column: String,
    pub seeds: Vec<u64>,
    pub best_dev_macro_f1: Vec<f64>,
    pub best_epochs: Vec<usize>,
}

/// Train the configured number of runs for one connector pair and persist
/// one checkpoint and one epoch log per run.
pub fn cmd_train(
    config: &PipelineConfig,
    connector_abbrev: &str,
) -> Result<TrainSummary, PipelineError> {
    train_with_provider(config, connector_abbrev, false)
}

fn train_with_provider(
    config: &PipelineConfig,
    connector_abbrev: &str,
    alt: bool,
) -> Result<TrainSummary, PipelineError> {
    let task = TaskData::load(config)?;
    require_artifact(
        &config.output_dir.join("cache"),
        "embedding cache",
        "run the embed command first",
    )?;
    let connector = connector_by_abbrev(connector_abbrev).map_err(|_| {
        PipelineError::ConfigInvalid(format!("unknown connector {connector_abbrev:?}"))
    })?;
    let provider = caching_provider(config, alt)?;
    let train_pairs = embed_instances(&task.partition(&task.split.train), &connector, &provider)?;
    let dev_pairs = embed_instances(&task.partition(&task.split.dev), &connector, &provider)?;

    let column = if alt {
        "alt-embedder"
    } else {
        config.column_label()
    };
    let encoder = config.encoder_base(provider.dim());
    let mut summary = TrainSummary {
        connector: connector.abbreviation.clone(),
        column: column.to_string(),
        seeds: config.run_seeds(),
        best_dev_macro_f1: Vec::new(),
        best_epochs: Vec::new(),
    };
    for &seed in &summary.seeds {
        let outcome = train_run(&train_pairs, &dev_pairs, &encoder, &config.train, seed)?;
        let dir = run_dir(config, column, &connector.abbreviation, seed);
        save_checkpoint(&outcome.checkpoint, &dir.join("checkpoint"))?;
        write_string_atomic(&dir.join("epochs.csv"), &epoch_log_csv(&outcome.logs))?;
        summary
            .best_dev_macro_f1
            .push(outcome.checkpoint.dev_macro_f1);
        summary.best_epochs.push(outcome.checkpoint.epoch);
    }
    update_manifest(config, "train")?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// eval.
// ---------------------------------------------------------------------------

/// One reported row: a single connector model, the vote ensemble, or the
/// majority baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub seeds: Vec<u64>,
    pub test_macro_f1s: Vec<f64>,
    pub summary: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub column: String,
    pub rows: Vec<EvalRow>,
}

/// Evaluate trained checkpoints on the official test split: per-connector
/// single models, the four-member vote when all its members are available,
/// and the all-support majority baseline.
pub fn cmd_eval(
    config: &PipelineConfig,
    connector_abbrevs: &[String],
) -> Result<EvalOutcome, PipelineError> {
    eval_with_provider(config, connector_abbrevs, false)
}

fn eval_with_provider(
    config: &PipelineConfig,
    connector_abbrevs: &[String],
    alt: bool,
) -> Result<EvalOutcome, PipelineError> {
    let task = TaskData::load(config)?;
    let provider = caching_provider(config, alt)?;
    let test_instances = task.partition(&task.split.test);
    let gold = task.gold_of(&test_instances);
    let column = if alt {
        "alt-embedder"
    } else {
        config.column_label()
    };
    let out_dir = reports_dir(config, column);
    let seeds = config.run_seeds();

    let mut rows: Vec<EvalRow> = Vec::new();
    // member_predictions[seed index] collects one prediction set per
    // linguistic connector, for the vote.
    let mut member_predictions: Vec<Vec<Vec<Prediction>>> = vec![Vec::new(); seeds.len()];

    for abbrev in connector_abbrevs {
        let connector = connector_by_abbrev(abbrev)
            .map_err(|_| PipelineError::ConfigInvalid(format!("unknown connector {abbrev:?}")))?;
        let test_pairs = embed_instances(&test_instances, &connector, &provider)?;
        let mut reports = Vec::new();
        let mut macro_f1s = Vec::new();
        for (si, &seed) in seeds.iter().enumerate() {
            let ckpt_dir =
                run_dir(config, column, &connector.abbreviation, seed).join("checkpoint");
            require_artifact(
                &ckpt_dir.join("manifest.json"),
                "checkpoint",
                "run the train command for this connector and seed first",
            )?;
            let checkpoint = load_checkpoint(&ckpt_dir)?;
            let predictions = classify_all(&test_pairs, &checkpoint.params, &checkpoint.encoder)?;
            let jsonl = predictions_to_jsonl(&predictions);
            write_string_atomic(
                &out_dir.join(format!(
                    "{}_run{seed}_predictions.jsonl",
                    fs_abbrev(&connector.abbreviation)
                )),
                &jsonl,
            )?;
            let report = compute_metrics(&predictions, &gold)?;
            macro_f1s.push(report.macro_f1);
            reports.push(report);
            if connector.linguistic {
                member_predictions[si].push(predictions);
            }
        }
        let summary = aggregate_metrics(&reports);
        write_string_atomic(
            &out_dir.join(format!(
                "{}_metrics.csv",
                fs_abbrev(&connector.abbreviation)
            )),
            &metrics_table_csv(&[(connector.abbreviation.clone(), summary.clone())]),
        )?;
        rows.push(EvalRow {
            name: connector.abbreviation.clone(),
            seeds: seeds.clone(),
            test_macro_f1s: macro_f1s,
            summary,
        });
    }

    // Vote over the four linguistic single models, where they were all
    // evaluated above.
    let ensemble = EnsembleConfig::default();
    if member_predictions
        .iter()
        .all(|m| m.len() == ensemble.members.len())
    {
        let mut reports = Vec::new();
        let mut macro_f1s = Vec::new();
        for (si, &seed) in seeds.iter().enumerate() {
            let members_by_rel = regroup_by_relation(&member_predictions[si]);
            let mut predictions = Vec::with_capacity(members_by_rel.len());
            for members in members_by_rel.values() {
                predictions.push(vote(members, &ensemble)?);
            }
            write_string_atomic(
                &out_dir.join(format!("vote_run{seed}_predictions.jsonl")),
                &predictions_to_jsonl(&predictions),
            )?;
            let report = compute_metrics(&predictions, &gold)?;
            macro_f1s.push(report.macro_f1);
            reports.push(report);
        }
        let summary = aggregate_metrics(&reports);
        write_string_atomic(
            &out_dir.join("vote_metrics.csv"),
            &metrics_table_csv(&[("vote".to_string(), summary.clone())]),
        )?;
        rows.push(EvalRow {
            name: "vote".to_string(),
            seeds: seeds.clone(),
            test_macro_f1s: macro_f1s,
            summary,
        });
    }

    // The all-support baseline needs no checkpoint; it anchors the report.
    let majority = majority_baseline_predictions(&gold);
    let majority_report = compute_metrics(&majority, &gold)?;
    let majority_summary = aggregate_metrics(&[majority_report.clone()]);
    write_string_atomic(
        &out_dir.join("majority_metrics.csv"),
        &metrics_table_csv(&[("majority".to_string(), majority_summary.clone())]),
    )?;
    rows.push(EvalRow {
        name: "majority".to_string(),
        seeds: Vec::new(),
        test_macro_f1s: vec![majority_report.macro_f1],
        summary: majority_summary,
    });

    let outcome = EvalOutcome {
        column: column.to_string(),
        rows,
    };
    let json = serde_json::to_string_pretty(&outcome).expect("eval outcome serializes");
    write_string_atomic(&out_dir.join("eval_summary.json"), &json)?;
    update_manifest(config, "eval")?;
    Ok(outcome)
}

/// Group per-connector prediction lists by relation id, keeping one entry
/// per relation holding all members' predictions.
fn regroup_by_relation(per_connector: &[Vec<Prediction>]) -> BTreeMap<String, Vec<Prediction>> {
    let mut grouped: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
    for predictions in per_connector {
        for p in predictions {
            grouped.entry(p.rel_id.clone()).or_default().push(p.clone());
        }
    }
    grouped
}

// ---------------------------------------------------------------------------
// ablate.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblateSummary {
    pub grid_path: PathBuf,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
}

/// Train and evaluate the full ablation grid: every configured connector
/// (plus the vote) against the basic, alt-embedder, no-coefficient, and
/// no-attention configurations.
pub fn cmd_ablate(config: &PipelineConfig) -> Result<AblateSummary, PipelineError> {
    if config.column_label() != "basic" {
        return Err(PipelineError::ConfigInvalid(
            "the ablate command owns the encoder toggles; \
             drop --no-coeff/--no-att and let it vary them"
                .to_string(),
        ));
    }
    let mut cells: Vec<AblationCell> = Vec::new();
    let columns = ["basic", "alt-embedder", "-coeff", "-att"];
    for column in columns {
        let mut variant = config.clone();
        let alt = column == "alt-embedder";
        match column {
            "-coeff" => variant.use_coefficients = false,
            "-att" => variant.use_attention = false,
            _ => {}
        }
        for abbrev in &config.connectors {
            train_with_provider(&variant, abbrev, alt)?;
        }
        let outcome = eval_with_provider(&variant, &config.connectors, alt)?;
        for row in &outcome.rows {
            if row.name == "majority" {
                continue;
            }
            cells.push(AblationCell {
                row: row.name.clone(),
                column: column.to_string(),
                macro_f1_runs: row.test_macro_f1s.clone(),
            });
        }
    }
    let grid = ablation_grid(&cells);
    let grid_path = config.output_dir.join("reports").join("ablation_grid.csv");
    write_string_atomic(&grid_path, &grid)?;
    update_manifest(config, "ablate")?;

    let mut rows: Vec<String> = Vec::new();
    for cell in &cells {
        if !rows.contains(&cell.row) {
            rows.push(cell.row.clone());
        }
    }
    Ok(AblateSummary {
        grid_path,
        rows,
        columns: columns.iter().map(|c| c.to_string()).collect(),
    })
}

// ---------------------------------------------------------------------------
// report.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub metrics_table: PathBuf,
    pub coefficient_files: Vec<PathBuf>,
}

/// Consolidate evaluation outputs into one metrics table and export the
/// learned span coefficients of each connector's first run.
pub fn cmd_report(config: &PipelineConfig) -> Result<ReportSummary, PipelineError> {
    let column = config.column_label();
    let out_dir = reports_dir(config, column);
    let summary_path = out_dir.join("eval_summary.json");
    require_artifact(
        &summary_path,
        "evaluation summary",
        "run the eval command first",
    )?;
    let text = std::fs::read_to_string(&summary_path)?;
    let outcome: EvalOutcome = serde_json::from_str(&text)
        .map_err(|e| PipelineError::ConfigInvalid(format!("corrupt eval_summary.json: {e}")))?;

    let table_rows: Vec<(String, MetricsSummary)> = outcome
        .rows
        .iter()
        .map(|r| (r.name.clone(), r.summary.clone()))
        .collect();
    let table_path = out_dir.join("metrics_table.csv");
    write_string_atomic(&table_path, &metrics_table_csv(&table_rows))?;

    let mut coefficient_files = Vec::new();
    let first_seed = config.seed_base;
    for abbrev in &config.connectors {
        let ckpt_dir = run_dir(config, column, abbrev, first_seed).join("checkpoint");
        if !ckpt_dir.join("manifest.json").is_file() {
            continue;
        }
        let checkpoint = load_checkpoint(&ckpt_dir)?;
        let export = export_coefficients(&checkpoint.params);
        let fs = fs_abbrev(abbrev);
        let scatter_path = out_dir.join(format!("coefficients_{fs}_scatter.csv"));
        write_string_atomic(&scatter_path, &export.scatter_csv)?;
        let summary_csv_path = out_dir.join(format!("coefficients_{fs}_summary.csv"));
        write_string_atomic(&summary_csv_path, &export.summary_csv)?;
        let svg = coefficient_scatter_svg(
            &checkpoint.params.c_target,
            &checkpoint.params.c_source,
            "c_target",
            "c_source",
        );
        let svg_path = out_dir.join(format!("coefficients_{fs}_scatter.svg"));
        write_string_atomic(&svg_path, &svg)?;
        coefficient_files.extend([scatter_path, summary_csv_path, svg_path]);
    }
    update_manifest(config, "report")?;
    Ok(ReportSummary {
        metrics_table: table_path,
        coefficient_files,
    })
}
