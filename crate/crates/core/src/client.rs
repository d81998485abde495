//! Model client roles.
//!
//! Three roles are used by the pipeline: chat completion (simulator, teacher,
//! reranker), per-token log-probability scoring (student losses) and text
//! embeddings (replay selection, diversity). Backends live outside the core;
//! [`mock`] holds the pure, deterministic ones.

pub mod mock;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulator and teacher sampling temperature.
pub const GENERATION_TEMPERATURE: f32 = 0.5;
/// Student-side inference temperature.
pub const STUDENT_TEMPERATURE: f32 = 0.6;
/// Output cap for student roles.
pub const STUDENT_MAX_TOKENS: u32 = 1024;
/// Output cap per simulator stage.
pub const STAGE_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("request timed out")]
    Timeout,
    #[error("backend error: {0}")]
    Backend(String),
    #[error("no recorded response for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("operation not supported by this backend: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl ModelError {
    /// Worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        matches!(self, ModelError::Timeout | ModelError::Backend(_))
    }
}

/// Decoding parameters of a chat role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ChatParams {
    pub fn new(temperature: f32, max_tokens: u32) -> Result<Self, ModelError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ModelError::InvalidInput(alloc::format!("temperature {temperature} outside [0, 2]")));
        }
        if max_tokens == 0 {
            return Err(ModelError::InvalidInput("max_tokens must be at least 1".into()));
        }
        Ok(Self { temperature, max_tokens })
    }

    pub fn generation() -> Self {
        Self { temperature: GENERATION_TEMPERATURE, max_tokens: STAGE_MAX_TOKENS }
    }

    pub fn student() -> Self {
        Self { temperature: STUDENT_TEMPERATURE, max_tokens: STUDENT_MAX_TOKENS }
    }
}

impl Default for ChatParams {
    fn default() -> Self {
        Self::generation()
    }
}

/// A rendered prompt. `template_id` names the template it came from
/// (e.g. `web/overview`) and takes part in replay fingerprints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub template_id: String,
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn new(template_id: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self { template_id: template_id.into(), system: system.into(), user: user.into() }
    }

    /// System and user text joined; what the fingerprint hashes.
    pub fn resolved(&self) -> String {
        let mut s = String::with_capacity(self.system.len() + self.user.len() + 2);
        s.push_str(&self.system);
        s.push_str("\n\n");
        s.push_str(&self.user);
        s
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError>;
}

pub trait LogprobClient: Send + Sync {
    /// Natural-log probability of each token of `target` following `prompt`.
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError>;
}

pub trait EmbeddingClient: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError>;
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        (**self).complete(prompt)
    }
}

impl<T: LogprobClient + ?Sized> LogprobClient for &T {
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        (**self).score_tokens(prompt, target)
    }
}

impl<T: EmbeddingClient + ?Sized> EmbeddingClient for &T {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        (**self).embed(texts)
    }
}

impl<T: ChatClient + ?Sized> ChatClient for alloc::boxed::Box<T> {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        (**self).complete(prompt)
    }
}

impl<T: LogprobClient + ?Sized> LogprobClient for alloc::boxed::Box<T> {
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        (**self).score_tokens(prompt, target)
    }
}

impl<T: EmbeddingClient + ?Sized> EmbeddingClient for alloc::boxed::Box<T> {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        (**self).embed(texts)
    }
}

/// Row-major `N × d` matrix of unit-norm embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl EmbeddingMatrix {
    /// Normalizes every row to unit length. All rows must share one non-zero
    /// dimension; zero rows are rejected.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(ModelError::InvalidInput("embedding rows must be non-empty".into()));
        }
        let mut out = Vec::with_capacity(rows.len());
        for mut row in rows {
            if row.len() != dim {
                return Err(ModelError::InvalidInput("embedding rows differ in dimension".into()));
            }
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            if norm.is_nan() || norm <= 0.0 || !norm.is_finite() {
                return Err(ModelError::InvalidInput("embedding row has zero or non-finite norm".into()));
            }
            for v in &mut row {
                *v /= norm;
            }
            out.push(row);
        }
        Ok(Self { dim, rows: out })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn params_validate_ranges() {
        assert!(ChatParams::new(2.5, 10).is_err());
        assert!(ChatParams::new(0.5, 0).is_err());
        assert_eq!(ChatParams::generation().temperature, 0.5);
        assert_eq!(ChatParams::student(), ChatParams::new(0.6, 1024).unwrap());
    }

    #[test]
    fn rows_are_normalized() {
        let m = EmbeddingMatrix::from_rows(vec![vec![3.0, 4.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(m.row(0), &[0.6, 0.8]);
        assert_eq!(m.row(1), &[0.0, 1.0]);
        assert!(EmbeddingMatrix::from_rows(vec![vec![0.0, 0.0]]).is_err());
        assert!(EmbeddingMatrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
