//! Deterministic offline embedder for tests and desk-scale experiments.
//!
//! Each token vector is a pure function of (seed, token string, position
//! parity), generated by SHA-256 in counter mode and mapped to f32 values in
//! [-1, 1). Distinct tokens get (with overwhelming probability) distinct
//! vectors, so a synthetic task can make a single signal token carry the
//! label. Position parity is included so the two readings of a minimal pair
//! stay distinguishable even when a connector token repeats elsewhere.

use super::{tag_for_char, EmbedError, EmbeddingProvider, TokenEmbeddingSequence};
use crate::reconstruct::tokenize;
use ndarray::Array2;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    d: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64, d: usize) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        HashEmbedder { seed, d }
    }

    /// The vector for one (token, position) observation. Values are f32
    /// rounded, widened to f64 (the crate-wide canonical policy).
    pub fn vector_for(&self, token: &str, position: usize) -> Vec<f64> {
        let parity = (position % 2) as u8;
        let mut out = Vec::with_capacity(self.d);
        let mut counter: u64 = 0;
        while out.len() < self.d {
            let mut hasher = Sha256::new();
            hasher.update(self.seed.to_le_bytes());
            hasher.update(token.as_bytes());
            hasher.update([0u8, parity]);
            hasher.update(counter.to_le_bytes());
            let digest = hasher.finalize();
            for chunk in digest.chunks_exact(4) {
                if out.len() == self.d {
                    break;
                }
                let u = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                let v = (u as f64 / 2147483648.0) - 1.0;
                out.push(v as f32 as f64);
            }
            counter += 1;
        }
        out
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> String {
        format!("test-hash-s{}-d{}", self.seed, self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn embed_text(
        &self,
        text: &str,
        span_char_ranges: [(usize, usize); 3],
    ) -> Result<TokenEmbeddingSequence, EmbedError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut matrix = Array2::<f64>::zeros((tokens.len(), self.d));
        for (i, tok) in tokens.iter().enumerate() {
            let v = self.vector_for(&tok.text, i);
            for (j, x) in v.into_iter().enumerate() {
                matrix[[i, j]] = x;
            }
        }
        let span_tags = tokens
            .iter()
            .map(|t| tag_for_char(t.start, &span_char_ranges))
            .collect();
        Ok(TokenEmbeddingSequence {
            tokens: tokens.into_iter().map(|t| t.text).collect(),
            matrix,
            span_tags,
            provider_id: self.provider_id(),
        })
    }
}
