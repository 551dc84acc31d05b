//! Disk cache for embedded sequences.
//!
//! Binary entry layout, bit-exact:
//!
//! ```text
//! "PLRK1" | u32 LE n | u32 LE d | n*d f32 LE row-major | n tag bytes | u64 LE checksum
//! ```
//!
//! Tag bytes: 0 = target, 1 = connector, 2 = source. The checksum is FNV-1a
//! (64-bit) over all preceding bytes. Entries are written to a temp file and
//! renamed into place, so concurrent writers never expose a torn entry. A
//! checksum or structure failure is reported as `CorruptEntry`; the caching
//! provider downgrades it to a miss with a warning and recomputes.

use super::{EmbedError, EmbeddingProvider, TokenEmbeddingSequence};
use crate::pipeline::write_bytes_atomic;
use crate::reconstruct::{tokenize, SpanTag};
use ndarray::Array2;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 5] = b"PLRK1";

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Serialize matrix + tags into the binary entry format.
pub fn encode_entry(matrix: &Array2<f64>, tags: &[SpanTag]) -> Vec<u8> {
    let (n, d) = (matrix.nrows(), matrix.ncols());
    assert_eq!(tags.len(), n, "one tag per row");
    let mut buf = Vec::with_capacity(5 + 8 + n * d * 4 + n + 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for v in matrix.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    buf.extend(tags.iter().map(|t| t.to_byte()));
    let checksum = fnv1a64(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    buf
}

/// Parse a binary entry. The returned matrix is f32 values widened to f64,
/// bit-identical to what `encode_entry` consumed under the crate's numeric
/// policy.
pub fn decode_entry(bytes: &[u8], path: &Path) -> Result<(Array2<f64>, Vec<SpanTag>), EmbedError> {
    let corrupt = |reason: &str| EmbedError::CorruptEntry {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 5 + 8 + 8 || &bytes[..5] != MAGIC {
        return Err(corrupt("missing or short header"));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expected_len = 13 + n * d * 4 + n + 8;
    if bytes.len() != expected_len {
        return Err(corrupt("length disagrees with header"));
    }
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if fnv1a64(&bytes[..body_end]) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut matrix = Array2::<f64>::zeros((n, d));
    let mut off = 13;
    for i in 0..n {
        for j in 0..d {
            let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
            matrix[[i, j]] = f32::from_le_bytes(raw) as f64;
            off += 4;
        }
    }
    let mut tags = Vec::with_capacity(n);
    for i in 0..n {
        tags.push(SpanTag::from_byte(bytes[off + i]).ok_or_else(|| corrupt("unknown tag byte"))?);
    }
    Ok((matrix, tags))
}

/// Write one entry atomically.
pub fn write_cache_file(path: &Path, seq: &TokenEmbeddingSequence) -> Result<(), EmbedError> {
    let bytes = encode_entry(&seq.matrix, &seq.span_tags);
    write_bytes_atomic(path, &bytes)?;
    Ok(())
}

/// Read one entry; `Err(CorruptEntry)` on any structural or checksum failure,
/// `Err(Io)` if the file is unreadable.
pub fn read_cache_file(path: &Path) -> Result<(Array2<f64>, Vec<SpanTag>), EmbedError> {
    let bytes = std::fs::read(path)?;
    decode_entry(&bytes, path)
}

/// Content key for one (provider, text) computation.
pub fn cache_key(provider_id: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(provider_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// A provider wrapper that persists results under a cache directory. Hits
/// return bit-identical matrices to the original computation; corrupt or
/// stale entries degrade to a miss (with a stderr warning) and are rewritten.
pub struct CachingProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: EmbeddingProvider> CachingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(CachingProvider { inner, dir })
    }

    pub fn entry_path(&self, text: &str) -> PathBuf {
        self.dir
            .join(cache_key(&self.inner.provider_id(), text))
            .with_extension("plrk")
    }

    fn try_hit(&self, text: &str) -> Option<(Array2<f64>, Vec<SpanTag>)> {
        let path = self.entry_path(text);
        if !path.exists() {
            return None;
        }
        match read_cache_file(&path) {
            Ok((matrix, tags)) => Some((matrix, tags)),
            Err(e) => {
                eprintln!("warning: discarding cache entry: {e}");
                None
            }
        }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachingProvider<P> {
    fn provider_id(&self) -> String {
        self.inner.provider_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_text(
        &self,
        text: &str,
        span_char_ranges: [(usize, usize); 3],
    ) -> Result<TokenEmbeddingSequence, EmbedError> {
        if let Some((matrix, tags)) = self.try_hit(text) {
            let tokens = tokenize(text);
            if tokens.len() == matrix.nrows() {
                return Ok(TokenEmbeddingSequence {
                    tokens: tokens.into_iter().map(|t| t.text).collect(),
                    matrix,
                    span_tags: tags,
                    provider_id: self.inner.provider_id(),
                });
            }
            eprintln!("warning: cache entry row count disagrees with tokenization; recomputing");
        }
        let seq = self.inner.embed_text(text, span_char_ranges)?;
        write_cache_file(&self.entry_path(text), &seq)?;
        Ok(seq)
    }
}

/// One line of the portable JSON Lines dump: `{key, tokens, tags, vectors}`.
pub fn entry_to_jsonl(key: &str, seq: &TokenEmbeddingSequence) -> String {
    let tags: Vec<u8> = seq.span_tags.iter().map(|t| t.to_byte()).collect();
    let vectors: Vec<Vec<f64>> = (0..seq.matrix.nrows())
        .map(|i| seq.matrix.row(i).to_vec())
        .collect();
    serde_json::json!({
        "key": key,
        "tokens": seq.tokens,
        "tags": tags,
        "vectors": vectors,
    })
    .to_string()
}
