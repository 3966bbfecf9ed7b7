//! Unit-norm text embeddings and cosine similarity.
//!
//! The default [`HashingEmbedder`] is signed feature hashing over lowercase
//! word tokens: deterministic, dependency-free and order-invariant.
//! [`RemoteEmbedder`] talks to an OpenAI-compatible `embeddings` endpoint.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::fingerprint::fnv1a64_seeded;
use crate::remote::RemoteConfig;
use crate::retry::{classify_ureq, with_retry, BackendError, FailureKind};

pub const DEFAULT_DIMENSION: usize = 256;
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding backend: {0}")]
    Backend(String),
}

/// Fixed-length vector with L2 norm 1 (within [`NORM_TOLERANCE`]).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    /// `values · values`, cached for [`cosine`].
    sq_norm: f64,
}

impl EmbeddingVector {
    /// Scale `raw` to unit length.
    pub fn normalized(raw: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::ZeroNorm);
        }
        let values: Vec<f64> = raw.into_iter().map(|v| v / norm).collect();
        let sq_norm = dot(&values, &values);
        Ok(Self { values, sq_norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm.sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, clamped to `[-1, 1]`.
///
/// Computed as `a·b / sqrt((a·a)(b·b))`, which makes `cosine(v, v)` exactly 1
/// and the result symmetric in its arguments.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let denom = (a.sq_norm * b.sq_norm).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(&a.values, &b.values) / denom).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
    fn dimension(&self) -> usize;
}

/// Lowercase alphanumeric word tokens.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
    seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, 0)
    }
}

impl HashingEmbedder {
    /// # Panics
    /// If `dimension` is zero.
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket index and sign for one token.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = fnv1a64_seeded(token.as_bytes(), self.seed);
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        (bucket, sign)
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut tokens = word_tokens(trimmed);
        if tokens.is_empty() {
            // Pure punctuation: hash the text itself as one token.
            tokens.push(trimmed.to_lowercase());
        }
        let mut signed = vec![0.0; self.dimension];
        let mut unsigned = vec![0.0; self.dimension];
        for t in &tokens {
            let (bucket, sign) = self.slot(t);
            signed[bucket] += sign;
            unsigned[bucket] += 1.0;
        }
        // Signed collisions can cancel to the zero vector; fall back to counts.
        EmbeddingVector::normalized(signed).or_else(|_| EmbeddingVector::normalized(unsigned))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Client for an OpenAI-compatible `embeddings` endpoint.
pub struct RemoteEmbedder {
    cfg: RemoteConfig,
    key: String,
    model: String,
    dimension: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteConfig, model: String, dimension: usize) -> Result<Self, BackendError> {
        let key = cfg.api_key()?;
        let agent = cfg.agent();
        Ok(Self {
            cfg,
            key,
            model,
            dimension,
            agent,
        })
    }

    fn call(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut resp = self
            .agent
            .post(&self.cfg.endpoint_url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(json!({"model": self.model, "input": text}))
            .map_err(|e| classify_ureq(&e))?;
        let body: Value = resp.body_mut().read_json().map_err(|e| classify_ureq(&e))?;
        body.pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|arr| arr.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| BackendError::new(FailureKind::Protocol, "reply has no data[0].embedding"))
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let raw = with_retry(self.cfg.retry_policy(), |_| self.call(text))
            .map_err(|ex| EmbeddingError::Backend(ex.last.to_string()))?;
        if raw.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                left: raw.len(),
                right: self.dimension,
            });
        }
        EmbeddingVector::normalized(raw)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Hashing {
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default)]
        seed: u64,
    },
    Remote {
        #[serde(flatten)]
        remote: RemoteConfig,
        model: String,
        dimension: usize,
    },
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Hashing {
            dimension: DEFAULT_DIMENSION,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn build(&self) -> Result<Arc<dyn Embedder>, BackendError> {
        match self {
            EmbeddingConfig::Hashing { dimension, seed } => {
                if *dimension == 0 {
                    return Err(BackendError::new(
                        FailureKind::Protocol,
                        "embedding dimension must be positive",
                    ));
                }
                Ok(Arc::new(HashingEmbedder::new(*dimension, *seed)))
            }
            EmbeddingConfig::Remote {
                remote,
                model,
                dimension,
            } => Ok(Arc::new(RemoteEmbedder::new(
                remote.clone(),
                model.clone(),
                *dimension,
            )?)),
        }
    }
}
