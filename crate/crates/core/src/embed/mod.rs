//! Frozen contextual token embeddings behind a pluggable provider interface.
//!
//! Providers map a reconstruction text to one vector per word-level token.
//! Embeddings are fixed features: they are computed once during preprocessing
//! (optionally through the disk cache) and never updated by training.
//!
//! Canonical numeric policy: providers average in f64, round the result to
//! f32, and widen back to f64. The f32 value is the value of record, so a
//! matrix that round-trips through the binary cache is bit-identical to the
//! freshly computed one.

mod cache;
mod hash_provider;
mod remote;

pub use cache::{
    cache_key, decode_entry, encode_entry, entry_to_jsonl, read_cache_file, write_cache_file,
    CachingProvider,
};
pub use hash_provider::HashEmbedder;
pub use remote::{RemoteEmbeddingClient, RemotePiece, RemoteProvider, RemoteTokenization};

use crate::reconstruct::{tokenize, Reconstruction, SpanTag};
use ndarray::Array2;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("provider {provider} unavailable: {reason}")]
    ProviderUnavailable { provider: String, reason: String },
    #[error("provider returned dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cache entry {path} is corrupt: {reason}")]
    CorruptEntry { path: String, reason: String },
    #[error("cannot align provider pieces to word tokens: {reason}")]
    Alignment { reason: String },
    #[error("text is empty")]
    EmptyText,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which provider layers are averaged into the output vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerPolicy {
    /// Mean of the last `k` layers (reference setting: k = 4).
    LastK(usize),
    /// Mean of all layers the provider exposes.
    All,
}

impl LayerPolicy {
    /// Stable fragment mixed into cache keys so policy changes never alias.
    pub fn id_fragment(&self) -> String {
        match self {
            LayerPolicy::LastK(k) => format!("last{k}"),
            LayerPolicy::All => "all".to_string(),
        }
    }
}

/// One embedded reconstruction: word-level tokens, an n×d matrix (one row
/// per token), aligned span tags, and the id of the provider that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSequence {
    pub tokens: Vec<String>,
    pub matrix: Array2<f64>,
    pub span_tags: Vec<SpanTag>,
    pub provider_id: String,
}

impl TokenEmbeddingSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Invariant check: one row and one tag per token.
    pub fn shape_consistent(&self) -> bool {
        self.matrix.nrows() == self.tokens.len() && self.span_tags.len() == self.tokens.len()
    }
}

/// A source of fixed token embeddings. Implementations must be deterministic
/// for a fixed input and safe to call concurrently.
pub trait EmbeddingProvider {
    /// Stable identity, part of every cache key.
    fn provider_id(&self) -> String;

    /// Output dimensionality, constant for the provider's lifetime.
    fn dim(&self) -> usize;

    /// Embed a reconstruction text. `span_char_ranges` are the three
    /// contiguous code-point ranges (target, connector, source); each output
    /// token takes the tag of the range containing its first character.
    fn embed_text(
        &self,
        text: &str,
        span_char_ranges: [(usize, usize); 3],
    ) -> Result<TokenEmbeddingSequence, EmbedError>;
}

/// Embed a reconstruction using its own span ranges.
pub fn embed_reconstruction(
    provider: &dyn EmbeddingProvider,
    recon: &Reconstruction,
) -> Result<TokenEmbeddingSequence, EmbedError> {
    provider.embed_text(&recon.text, recon.span_char_ranges())
}

/// Tag for a token beginning at code point `start`: the tag of whichever
/// range holds that first character. A token straddling a boundary therefore
/// takes its leading range's tag.
pub fn tag_for_char(start: usize, ranges: &[(usize, usize); 3]) -> SpanTag {
    if start < ranges[0].1 {
        SpanTag::Target
    } else if start < ranges[1].1 {
        SpanTag::Connector
    } else {
        SpanTag::Source
    }
}

/// Word-level tokens of a reconstruction text with their span tags.
pub fn word_tokens_with_tags(
    text: &str,
    ranges: [(usize, usize); 3],
) -> (Vec<crate::reconstruct::Token>, Vec<SpanTag>) {
    let tokens = tokenize(text);
    let tags = tokens
        .iter()
        .map(|t| tag_for_char(t.start, &ranges))
        .collect();
    (tokens, tags)
}

/// Elementwise mean of the layers selected by `policy`, computed in f64 and
/// rounded through f32 (see the module policy). Layers are ordered bottom to
/// top; each is n×d.
pub fn average_layers(layers: &[Array2<f64>], policy: LayerPolicy) -> Array2<f64> {
    assert!(!layers.is_empty(), "at least one layer required");
    let selected: &[Array2<f64>] = match policy {
        LayerPolicy::All => layers,
        LayerPolicy::LastK(k) => &layers[layers.len().saturating_sub(k)..],
    };
    let mut sum = Array2::<f64>::zeros(selected[0].raw_dim());
    for layer in selected {
        sum += layer;
    }
    sum.mapv(|v| (v / selected.len() as f64) as f32 as f64)
}

/// Average piece-level vectors into word-level rows. `piece_starts[i]` is the
/// code-point offset of piece i's first character; a piece belongs to the
/// word token whose [start, end) contains that offset. Every word must
/// receive at least one piece.
pub fn align_pieces_to_words(
    piece_matrix: &Array2<f64>,
    piece_starts: &[usize],
    words: &[crate::reconstruct::Token],
) -> Result<Array2<f64>, EmbedError> {
    let d = piece_matrix.ncols();
    let mut out = Array2::<f64>::zeros((words.len(), d));
    let mut counts = vec![0usize; words.len()];
    for (i, &start) in piece_starts.iter().enumerate() {
        let w = words
            .iter()
            .position(|t| start >= t.start && start < t.end)
            .ok_or_else(|| EmbedError::Alignment {
                reason: format!("piece at offset {start} falls in no word token"),
            })?;
        let mut row = out.row_mut(w);
        row += &piece_matrix.row(i);
        counts[w] += 1;
    }
    for (w, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(EmbedError::Alignment {
                reason: format!("word token {w} ({:?}) received no pieces", words[w].text),
            });
        }
        let mut row = out.row_mut(w);
        row.mapv_inplace(|v| (v / c as f64) as f32 as f64);
    }
    Ok(out)
}
