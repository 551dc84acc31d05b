//! Margin-ranking optimization with dev-based epoch selection.
//!
//! Each training item is a minimal pair of embedded readings. One run is
//! strictly sequential: seeded shuffle, mini-batch gradient accumulation,
//! adaptive-moment updates on the flat parameter vector, a dev evaluation at
//! initialization and after every epoch, and selection of the first epoch
//! that attains the maximum dev macro F1. Everything is deterministic given
//! the seed.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationLabel;
use crate::embed::{
    decode_entry, encode_entry, EmbedError, EmbeddingProvider, TokenEmbeddingSequence,
};
use crate::eval::{
    aggregate_metrics, classify_all, compute_metrics, EvalError, MetricsReport, MetricsSummary,
};
use crate::model::{backward, forward, EncoderConfig, Gradients, ModelError, ModelParams};
use crate::pipeline::{write_bytes_atomic, write_string_atomic};
use crate::reconstruct::{MinimalPair, SpanTag};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("score batches differ in length: {plus} vs {minus}")]
    LengthMismatch { plus: usize, minus: usize },
    #[error("loss of an empty batch")]
    EmptyBatch,
    #[error("empty {0} set")]
    EmptyData(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {loss} in epoch {epoch}, batch {batch} (seed {seed})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        seed: u64,
        loss: f64,
    },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One relation as the optimizer sees it: both readings embedded, plus the
/// gold label that says which reading must outscore the other.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPair {
    pub rel_id: String,
    pub gold: RelationLabel,
    pub connector_abbrev: String,
    pub support_marked: TokenEmbeddingSequence,
    pub attack_marked: TokenEmbeddingSequence,
}

impl EmbeddedPair {
    /// The reading consistent with the gold label.
    pub fn plus(&self) -> &TokenEmbeddingSequence {
        match self.gold {
            RelationLabel::Support => &self.support_marked,
            RelationLabel::Attack => &self.attack_marked,
        }
    }

    /// The reading contradicting the gold label.
    pub fn minus(&self) -> &TokenEmbeddingSequence {
        match self.gold {
            RelationLabel::Support => &self.attack_marked,
            RelationLabel::Attack => &self.support_marked,
        }
    }

    /// Embed both readings of a reconstruction pair. `r_plus` is the
    /// gold-consistent reading, so the support-marked sequence is `r_plus`
    /// exactly when the gold label is support.
    pub fn from_minimal_pair(
        pair: &MinimalPair,
        provider: &dyn EmbeddingProvider,
    ) -> Result<EmbeddedPair, EmbedError> {
        let plus = provider.embed_text(&pair.r_plus.text, pair.r_plus.span_char_ranges())?;
        let minus = provider.embed_text(&pair.r_minus.text, pair.r_minus.span_char_ranges())?;
        let (support_marked, attack_marked) = match pair.gold {
            RelationLabel::Support => (plus, minus),
            RelationLabel::Attack => (minus, plus),
        };
        Ok(EmbeddedPair {
            rel_id: pair.rel_id.clone(),
            gold: pair.gold,
            connector_abbrev: pair.connector_abbrev.clone(),
            support_marked,
            attack_marked,
        })
    }
}

/// Optimizer and schedule settings. The defaults are the reference configuration.
/// Fields omitted from a JSON override section keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub margin: f64,
    pub runs: usize,
    pub seed_base: u64,
    /// Clamp each pair's loss term at zero (default). The unclamped variant
    /// keeps rewarding score separation beyond the margin.
    pub hinge: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 64,
            max_epochs: 25,
            margin: 1.0,
            runs: 5,
            seed_base: 0,
            hinge: true,
        }
    }
}

/// Mean ranking loss over one batch of score pairs.
pub fn rank_loss(
    scores_plus: &[f64],
    scores_minus: &[f64],
    margin: f64,
    hinge: bool,
) -> Result<f64, TrainError> {
    if scores_plus.len() != scores_minus.len() {
        return Err(TrainError::LengthMismatch {
            plus: scores_plus.len(),
            minus: scores_minus.len(),
        });
    }
    if scores_plus.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let n = scores_plus.len() as f64;
    let sum: f64 = scores_plus
        .iter()
        .zip(scores_minus)
        .map(|(p, m)| {
            let term = margin - p + m;
            if hinge {
                term.max(0.0)
            } else {
                term
            }
        })
        .sum();
    Ok(sum / n)
}

/// Adaptive-moment gradient descent on a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// The selected state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub encoder: EncoderConfig,
    pub seed: u64,
    /// 0 means the initialization state was never beaten.
    pub epoch: usize,
    pub dev_macro_f1: f64,
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Epoch 0 holds the full-train loss of the initialized model; later
    /// epochs hold the mean per-pair loss seen while updating.
    pub train_loss: f64,
    pub dev_macro_f1: f64,
    pub wall_seconds: f64,
}

pub fn epoch_log_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,dev_macro_f1,wall_seconds\n");
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{:.3}\n",
            l.epoch, l.train_loss, l.dev_macro_f1, l.wall_seconds
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub logs: Vec<EpochLog>,
}

fn dev_macro_f1(
    dev: &[EmbeddedPair],
    params: &ModelParams,
    encoder: &EncoderConfig,
) -> Result<f64, TrainError> {
    let predictions = classify_all(dev, params, encoder)?;
    let gold: BTreeMap<String, RelationLabel> =
        dev.iter().map(|p| (p.rel_id.clone(), p.gold)).collect();
    Ok(compute_metrics(&predictions, &gold)?.macro_f1)
}

/// Mean loss over a full pair set without touching the parameters.
pub fn dataset_loss(
    pairs: &[EmbeddedPair],
    params: &ModelParams,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    let mut plus = Vec::with_capacity(pairs.len());
    let mut minus = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let p = pair.plus();
        let m = pair.minus();
        plus.push(forward(&p.matrix, &p.span_tags, p.len(), params, encoder)?.0);
        minus.push(forward(&m.matrix, &m.span_tags, m.len(), params, encoder)?.0);
    }
    rank_loss(&plus, &minus, config.margin, config.hinge)
}

/// Fraction of pairs whose gold-consistent reading strictly outscores the
/// other reading.
pub fn ranking_accuracy(
    pairs: &[EmbeddedPair],
    params: &ModelParams,
    encoder: &EncoderConfig,
) -> Result<f64, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyData("ranking"));
    }
    let mut hits = 0usize;
    for pair in pairs {
        let p = pair.plus();
        let m = pair.minus();
        let sp = forward(&p.matrix, &p.span_tags, p.len(), params, encoder)?.0;
        let sm = forward(&m.matrix, &m.span_tags, m.len(), params, encoder)?.0;
        if sp > sm {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

/// Train one model: seeded initialization and shuffling, mini-batch updates,
/// dev evaluation at epoch 0 and after each epoch, best-dev selection (first
/// epoch on ties).
pub fn train_run(
    pairs: &[EmbeddedPair],
    dev: &[EmbeddedPair],
    encoder_base: &EncoderConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyData("train"));
    }
    if dev.is_empty() {
        return Err(TrainError::EmptyData("dev"));
    }
    if config.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size = 0".to_string()));
    }
    let encoder = EncoderConfig {
        seed,
        ..*encoder_base
    };
    let mut params = ModelParams::init(&encoder)?;
    let mut flat = params.flatten();
    let mut adam = Adam::new(config.learning_rate, flat.len());
    // The shuffle stream is separate from the initialization stream so the
    // two never interleave.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x53_48_55_46_46_4c_45_31);

    let mut logs = Vec::with_capacity(config.max_epochs + 1);
    let start = Instant::now();
    let init_loss = dataset_loss(pairs, &params, &encoder, config)?;
    let init_f1 = dev_macro_f1(dev, &params, &encoder)?;
    logs.push(EpochLog {
        epoch: 0,
        train_loss: init_loss,
        dev_macro_f1: init_f1,
        wall_seconds: start.elapsed().as_secs_f64(),
    });
    let mut best = Checkpoint {
        params: params.clone(),
        encoder,
        seed,
        epoch: 0,
        dev_macro_f1: init_f1,
    };

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 1..=config.max_epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss_sum = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = Gradients::zeros_like(&params);
            let mut plus_scores = Vec::with_capacity(batch.len());
            let mut minus_scores = Vec::with_capacity(batch.len());
            for &i in batch {
                let pair = &pairs[i];
                let p = pair.plus();
                let m = pair.minus();
                let (sp, cache_p) = forward(&p.matrix, &p.span_tags, p.len(), &params, &encoder)?;
                let (sm, cache_m) = forward(&m.matrix, &m.span_tags, m.len(), &params, &encoder)?;
                plus_scores.push(sp);
                minus_scores.push(sm);
                let active = !config.hinge || config.margin - sp + sm > 0.0;
                if active {
                    grads.add_assign(&backward(
                        &p.matrix,
                        &p.span_tags,
                        &cache_p,
                        &params,
                        &encoder,
                        -scale,
                    ));
                    grads.add_assign(&backward(
                        &m.matrix,
                        &m.span_tags,
                        &cache_m,
                        &params,
                        &encoder,
                        scale,
                    ));
                }
            }
            let batch_loss = rank_loss(&plus_scores, &minus_scores, config.margin, config.hinge)?;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                    seed,
                    loss: batch_loss,
                });
            }
            epoch_loss_sum += batch_loss * batch.len() as f64;
            adam.step(&mut flat, &grads.flatten());
            params.assign_from_flat(&flat);
        }
        let train_loss = epoch_loss_sum / pairs.len() as f64;
        let f1 = dev_macro_f1(dev, &params, &encoder)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            dev_macro_f1: f1,
            wall_seconds: epoch_start.elapsed().as_secs_f64(),
        });
        if f1 > best.dev_macro_f1 {
            best = Checkpoint {
                params: params.clone(),
                encoder,
                seed,
                epoch,
                dev_macro_f1: f1,
            };
        }
    }
    Ok(TrainOutcome {
        checkpoint: best,
        logs,
    })
}

/// One seed's slice of a multi-run experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub test_metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunOutcome {
    pub runs: Vec<RunRecord>,
    pub summary: MetricsSummary,
}

/// Run `config.runs` seeds (seed_base, seed_base+1, …), evaluate each
/// selected checkpoint on the test set, and aggregate mean ± sample std per
/// metric.
pub fn multi_run(
    pairs: &[EmbeddedPair],
    dev: &[EmbeddedPair],
    test: &[EmbeddedPair],
    encoder_base: &EncoderConfig,
    config: &TrainConfig,
) -> Result<MultiRunOutcome, TrainError> {
    if config.runs == 0 {
        return Err(TrainError::InvalidConfig("runs = 0".to_string()));
    }
    if test.is_empty() {
        return Err(TrainError::EmptyData("test"));
    }
    let gold: BTreeMap<String, RelationLabel> =
        test.iter().map(|p| (p.rel_id.clone(), p.gold)).collect();
    let mut runs = Vec::with_capacity(config.runs);
    for offset in 0..config.runs {
        let seed = config.seed_base + offset as u64;
        let outcome = train_run(pairs, dev, encoder_base, config, seed)?;
        let predictions = classify_all(
            test,
            &outcome.checkpoint.params,
            &outcome.checkpoint.encoder,
        )?;
        let test_metrics = compute_metrics(&predictions, &gold)?;
        runs.push(RunRecord {
            seed,
            outcome,
            test_metrics,
        });
    }
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.test_metrics.clone()).collect();
    Ok(MultiRunOutcome {
        runs,
        summary: aggregate_metrics(&reports),
    })
}

// ---------------------------------------------------------------------------
// Checkpoint persistence: a JSON manifest next to the tensors in the same
// little-endian float32 container the embedding cache uses.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    encoder: EncoderConfig,
    seed: u64,
    epoch: usize,
    dev_macro_f1: f64,
    n_params: usize,
    tensors: Vec<TensorSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(checkpoint: &Checkpoint, dir: &Path) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir)?;
    let flat = checkpoint.params.flatten();
    let manifest = CheckpointManifest {
        encoder: checkpoint.encoder,
        seed: checkpoint.seed,
        epoch: checkpoint.epoch,
        dev_macro_f1: checkpoint.dev_macro_f1,
        n_params: flat.len(),
        tensors: checkpoint
            .params
            .tensor_specs()
            .into_iter()
            .map(|(name, shape)| TensorSpec { name, shape })
            .collect(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_string_atomic(&dir.join("manifest.json"), &manifest_json)?;
    let matrix = Array2::from_shape_vec((1, flat.len()), flat).expect("row shape");
    let bytes = encode_entry(&matrix, &[SpanTag::Target]);
    write_bytes_atomic(&dir.join("params.bin"), &bytes)?;
    Ok(())
}

/// Load a checkpoint saved by `save_checkpoint`. Values come back exactly as
/// stored: the container holds 32-bit floats, so parameters are the float32
/// rounding of what was saved.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, TrainError> {
    let manifest_path = dir.join("manifest.json");
    let manifest_text = std::fs::read_to_string(&manifest_path)?;
    let manifest: CheckpointManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| TrainError::CorruptCheckpoint(format!("manifest: {e}")))?;
    let params_path = dir.join("params.bin");
    let bytes = std::fs::read(&params_path)?;
    let (matrix, _tags) = decode_entry(&bytes, &params_path)
        .map_err(|e| TrainError::CorruptCheckpoint(e.to_string()))?;
    if matrix.nrows() != 1 || matrix.ncols() != manifest.n_params {
        return Err(TrainError::CorruptCheckpoint(format!(
            "tensor container holds {}x{}, manifest says 1x{}",
            matrix.nrows(),
            matrix.ncols(),
            manifest.n_params
        )));
    }
    let mut params = ModelParams::init(&manifest.encoder)?;
    if params.n_params() != manifest.n_params {
        return Err(TrainError::CorruptCheckpoint(format!(
            "configuration implies {} parameters, container holds {}",
            params.n_params(),
            manifest.n_params
        )));
    }
    let flat: Vec<f64> = matrix.row(0).to_vec();
    params.assign_from_flat(&flat);
    Ok(Checkpoint {
        params,
        encoder: manifest.encoder,
        seed: manifest.seed,
        epoch: manifest.epoch,
        dev_macro_f1: manifest.dev_macro_f1,
    })
}
