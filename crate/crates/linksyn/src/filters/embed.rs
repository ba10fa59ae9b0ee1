//! Embedding backends for similarity screening.
//!
//! Embeddings are sparse `(dimension, weight)` vectors so an offline
//! token-hashing embedder (exact, collision-free for practical vocabularies)
//! and dense remote embeddings share one cosine implementation. The hashing
//! embedder maps each token to its 64-bit fingerprint dimension with its
//! occurrence count as weight; texts with disjoint token sets are exactly
//! orthogonal.

use thiserror::Error;

use crate::filters::ngram::{fnv1a64, tokenize};

#[derive(Debug, Error)]
#[error("embedder unavailable: {0}")]
pub struct EmbedderError(pub String);

/// Sparse vector: strictly ascending dimensions with nonzero weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<(u64, f64)>);

impl Embedding {
    /// Builds from raw pairs; duplicate dimensions are summed and zeros
    /// dropped.
    pub fn new(mut pairs: Vec<(u64, f64)>) -> Self {
        pairs.sort_by_key(|&(d, _)| d);
        let mut merged: Vec<(u64, f64)> = Vec::with_capacity(pairs.len());
        for (d, w) in pairs {
            match merged.last_mut() {
                Some((last, acc)) if *last == d => *acc += w,
                _ => merged.push((d, w)),
            }
        }
        merged.retain(|&(_, w)| w != 0.0);
        Self(merged)
    }

    /// Adapts a dense vector (dimension = position).
    pub fn from_dense(values: &[f64]) -> Self {
        Self::new(
            values
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u64, v))
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Cosine similarity by merge-join over sorted dimensions; 0.0 when
    /// either vector is empty.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let (a, b) = (&self.0, &other.0);
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let mut dot = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let norm_a: f64 = a.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        let norm_b: f64 = b.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        dot / (norm_a * norm_b)
    }
}

/// Text-to-vector provider usable from parallel filter workers.
pub trait Embedder: Sync {
    fn id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Embedding, EmbedderError>;
}

/// Offline bag-of-tokens embedder: dimension = token fingerprint, weight =
/// occurrence count. Deterministic and dependency-free; intended for tests
/// and air-gapped runs rather than semantic similarity.
#[derive(Debug, Default, Clone, Copy)]
pub struct HashingEmbedder;

impl Embedder for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing-fnv64"
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedderError> {
        Ok(Embedding::new(
            tokenize(text)
                .into_iter()
                .map(|t| (fnv1a64(t.as_bytes()), 1.0))
                .collect(),
        ))
    }
}

/// Remote embedding endpoint (OpenAI-compatible `/embeddings` schema).
#[cfg(feature = "http")]
pub struct HttpEmbedder {
    id: String,
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

#[cfg(feature = "http")]
impl HttpEmbedder {
    /// `endpoint` is the full embeddings URL. The credential is read from
    /// `api_key_env` once; unset means unauthenticated requests.
    pub fn new(
        endpoint: &str,
        model: &str,
        api_key_env: &str,
        timeout_secs: u64,
    ) -> Result<Self, EmbedderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| EmbedderError(e.to_string()))?;
        Ok(Self {
            id: format!("http:{model}"),
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: std::env::var(api_key_env).ok(),
        })
    }
}

#[cfg(feature = "http")]
impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedderError> {
        let body = serde_json::json!({ "model": self.model, "input": [text] });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedderError(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedderError(format!("http status {}", resp.status())));
        }
        let value: serde_json::Value =
            resp.json().map_err(|e| EmbedderError(format!("unreadable body: {e}")))?;
        let dense: Vec<f64> = value
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| EmbedderError("malformed embedding response".into()))?
            .iter()
            .map(|v| v.as_f64().unwrap_or(0.0))
            .collect();
        Ok(Embedding::from_dense(&dense))
    }
}
