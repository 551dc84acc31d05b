//! Argumentative relation classification as plausibility ranking.
//!
//! Given two argumentative units, a source and a target, the task is to
//! decide whether the source *supports* or *attacks* the target. This crate
//! reframes the decision as a ranking problem: each relation instance is
//! rewritten into two candidate discourse texts that differ only in a
//! connector phrase (one signalling support, one signalling attack), and a
//! Siamese neural ranker is trained to prefer the reading that matches the
//! gold relation. At prediction time the connector of the higher-scoring
//! reading names the relation class.
//!
//! Pipeline stages, each its own module:
//!
//! - [`corpus`]: standoff-annotation ingestion, task views, data splits
//! - [`reconstruct`]: minimal-pair construction with connector markers
//! - [`embed`]: frozen contextual token embeddings, providers and disk cache
//! - [`model`]: the Siamese scorer (coefficients, BiLSTM, self-attention,
//!   attention pooling, selu head) with analytic gradients
//! - [`train`]: margin ranking loss, Adam, epoch selection, multi-seed runs
//! - [`eval`]: classification rule, voting ensemble, metrics, exports
//! - [`pipeline`]: the end-to-end command orchestration behind the CLI
//! - [`synthetic`]: deterministic desk-scale data generators for tests and
//!   demos

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod reconstruct;
pub mod synthetic;
pub mod train;

pub use corpus::{CorpusView, DataSplit, Document, RelationLabel, ViewInstance, ViewMode};
pub use reconstruct::{ConnectorPair, MinimalPair, Reconstruction, SpanTag};
