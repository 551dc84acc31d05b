//! Client for an external embedding service.
//!
//! The wire contract is deliberately narrow so any language-model server can
//! sit behind it: the client POSTs `{"text": ...}` and receives piece-level
//! tokenization plus per-layer piece vectors:
//!
//! ```text
//! {"pieces": [{"text", "start", "end"}, ...],          // code-point offsets
//!  "layers": [[[f64; d]; n_pieces]; n_layers]}         // bottom to top
//! ```
//!
//! The provider averages the layers selected by its policy, then averages
//! pieces into word-level tokens, so downstream consumers never see subword
//! structure. The reference configuration expects d = 1024 and averages the
//! last four layers; the alternative "elmo-style" configuration averages all
//! layers.

use super::{
    align_pieces_to_words, average_layers, tag_for_char, EmbedError, EmbeddingProvider,
    LayerPolicy, TokenEmbeddingSequence,
};
use crate::reconstruct::tokenize;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemotePiece {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// One service response: pieces plus per-layer piece vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteTokenization {
    pub pieces: Vec<RemotePiece>,
    pub layers: Vec<Vec<Vec<f64>>>,
}

pub struct RemoteEmbeddingClient {
    endpoint: String,
    http: reqwest::blocking::Client,
}

impl RemoteEmbeddingClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let http = reqwest::blocking::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(Duration::from_secs(120))
            .build()
            .expect("client construction cannot fail with static settings");
        RemoteEmbeddingClient {
            endpoint: endpoint.into(),
            http,
        }
    }

    pub fn fetch(&self, text: &str, provider: &str) -> Result<RemoteTokenization, EmbedError> {
        let unavailable = |reason: String| EmbedError::ProviderUnavailable {
            provider: provider.to_string(),
            reason,
        };
        let response = self
            .http
            .post(&self.endpoint)
            .json(&serde_json::json!({ "text": text }))
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(unavailable(format!("HTTP {}", response.status())));
        }
        response
            .json::<RemoteTokenization>()
            .map_err(|e| unavailable(format!("malformed response: {e}")))
    }
}

/// A remote-backed provider with a fixed layer policy and dimensionality.
pub struct RemoteProvider {
    client: RemoteEmbeddingClient,
    policy: LayerPolicy,
    name: String,
    d: usize,
}

impl RemoteProvider {
    /// Reference configuration: 1024-dimensional vectors, mean of the last
    /// four layers.
    pub fn reference(endpoint: impl Into<String>) -> Self {
        RemoteProvider {
            client: RemoteEmbeddingClient::new(endpoint),
            policy: LayerPolicy::LastK(4),
            name: "reference".to_string(),
            d: 1024,
        }
    }

    /// Alternative embedder: mean over all layers, caller-specified d.
    pub fn elmo_style(endpoint: impl Into<String>, d: usize) -> Self {
        RemoteProvider {
            client: RemoteEmbeddingClient::new(endpoint),
            policy: LayerPolicy::All,
            name: "elmo-style".to_string(),
            d,
        }
    }

    pub fn with_policy(
        endpoint: impl Into<String>,
        name: &str,
        d: usize,
        policy: LayerPolicy,
    ) -> Self {
        RemoteProvider {
            client: RemoteEmbeddingClient::new(endpoint),
            policy,
            name: name.to_string(),
            d,
        }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn provider_id(&self) -> String {
        format!("{}-{}-d{}", self.name, self.policy.id_fragment(), self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn embed_text(
        &self,
        text: &str,
        span_char_ranges: [(usize, usize); 3],
    ) -> Result<TokenEmbeddingSequence, EmbedError> {
        let words = tokenize(text);
        if words.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let response = self.client.fetch(text, &self.name)?;
        let n_pieces = response.pieces.len();
        let mut layers = Vec::with_capacity(response.layers.len());
        for layer in &response.layers {
            if layer.len() != n_pieces {
                return Err(EmbedError::ProviderUnavailable {
                    provider: self.name.clone(),
                    reason: "layer row count disagrees with piece count".to_string(),
                });
            }
            let mut m = Array2::<f64>::zeros((n_pieces, self.d));
            for (i, row) in layer.iter().enumerate() {
                if row.len() != self.d {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.d,
                        found: row.len(),
                    });
                }
                for (j, v) in row.iter().enumerate() {
                    m[[i, j]] = *v;
                }
            }
            layers.push(m);
        }
        if layers.is_empty() {
            return Err(EmbedError::ProviderUnavailable {
                provider: self.name.clone(),
                reason: "response contained no layers".to_string(),
            });
        }
        let averaged = average_layers(&layers, self.policy);
        let piece_starts: Vec<usize> = response.pieces.iter().map(|p| p.start).collect();
        let matrix = align_pieces_to_words(&averaged, &piece_starts, &words)?;
        let span_tags = words
            .iter()
            .map(|t| tag_for_char(t.start, &span_char_ranges))
            .collect();
        Ok(TokenEmbeddingSequence {
            tokens: words.into_iter().map(|t| t.text).collect(),
            matrix,
            span_tags,
            provider_id: self.provider_id(),
        })
    }
}
