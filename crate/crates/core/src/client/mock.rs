//! Deterministic, dependency-free backends for offline runs.

use alloc::string::String;
use alloc::vec::Vec;

use super::{EmbeddingClient, EmbeddingMatrix, LogprobClient, ModelError};

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Tokenizer shared by the mock scorers: maximal alphanumeric runs plus each
/// remaining non-whitespace character on its own.
pub fn mock_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Every token gets probability `1 / vocab`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformLogprob {
    pub vocab: u32,
}

impl UniformLogprob {
    pub fn new(vocab: u32) -> Self {
        assert!(vocab >= 1, "vocabulary must be non-empty");
        Self { vocab }
    }
}

impl LogprobClient for UniformLogprob {
    fn score_tokens(&self, _prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        let lp = -libm::log(f64::from(self.vocab));
        Ok(mock_tokenize(target).iter().map(|_| lp).collect())
    }
}

/// Per-token log-probabilities drawn from a hash of the prompt and token,
/// spread over `[ln floor, 0)`. Different tasks get different losses while
/// staying reproducible across processes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashedLogprob {
    pub floor: f64,
    pub salt: u64,
}

impl Default for HashedLogprob {
    fn default() -> Self {
        Self { floor: 0.01, salt: 0 }
    }
}

impl LogprobClient for HashedLogprob {
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(ModelError::InvalidInput("floor must lie in (0, 1)".into()));
        }
        let base = fnv1a64(prompt.as_bytes()) ^ self.salt;
        let ln_floor = libm::log(self.floor);
        Ok(mock_tokenize(target)
            .iter()
            .enumerate()
            .map(|(i, tok)| {
                let h = fnv1a64(tok.as_bytes()) ^ base.rotate_left((i % 64) as u32);
                let u = (fnv1a64(&h.to_le_bytes()) >> 11) as f64 / (1u64 << 53) as f64;
                u * ln_floor
            })
            .collect())
    }
}

/// Signed feature hashing of character n-grams into `dim` buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramEmbedder {
    pub dim: usize,
    pub n: usize,
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        Self { dim: 256, n: 3 }
    }
}

impl NgramEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = alloc::vec![0.0; self.dim];
        let padded: Vec<char> = core::iter::once('^')
            .chain(text.to_lowercase().chars())
            .chain(core::iter::once('$'))
            .collect();
        let n = self.n.max(1);
        let mut buf = String::new();
        for w in padded.windows(n.min(padded.len())) {
            buf.clear();
            buf.extend(w);
            let h = fnv1a64(buf.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

impl EmbeddingClient for NgramEmbedder {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        if texts.is_empty() {
            return Err(ModelError::InvalidInput("nothing to embed".into()));
        }
        if self.dim == 0 {
            return Err(ModelError::InvalidInput("embedding dimension must be positive".into()));
        }
        EmbeddingMatrix::from_rows(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Returns preset vectors, normalized. Handy for hand-built fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEmbedder {
    pub rows: Vec<(String, Vec<f64>)>,
}

impl EmbeddingClient for FixedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        let rows = texts
            .iter()
            .map(|t| {
                self.rows
                    .iter()
                    .find(|(k, _)| k == t)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| ModelError::InvalidInput(alloc::format!("no vector for {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        EmbeddingMatrix::from_rows(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::dot;
    use alloc::vec;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(mock_tokenize("click [3706]"), vec!["click", "[", "3706", "]"]);
        assert!(mock_tokenize("").is_empty());
        assert_eq!(mock_tokenize("  a  "), vec!["a"]);
    }

    #[test]
    fn uniform_vocab_two_is_ln_half() {
        let lp = UniformLogprob::new(2).score_tokens("p", "type [10] [x] [1]").unwrap();
        assert_eq!(lp.len(), 10);
        for v in lp {
            assert!((v - libm::log(0.5)).abs() < 1e-15);
        }
        assert!(UniformLogprob::new(2).score_tokens("p", "").unwrap().is_empty());
    }

    #[test]
    fn hashed_logprobs_are_non_positive_and_stable() {
        let m = HashedLogprob::default();
        let a = m.score_tokens("prompt", "click [3]").unwrap();
        assert_eq!(a, m.score_tokens("prompt", "click [3]").unwrap());
        assert!(a.iter().all(|v| v.is_finite() && *v <= 0.0));
        assert_ne!(a, m.score_tokens("other prompt", "click [3]").unwrap());
    }

    #[test]
    fn embedder_cosine_two_ways() {
        let e = NgramEmbedder::default();
        let m = e.embed(&["abc".into(), "abd".into(), "abc".into()]).unwrap();
        assert_eq!(m.row(0), m.row(2));
        let raw_a = e.embed_one("abc");
        let raw_b = e.embed_one("abd");
        let na = libm::sqrt(dot(&raw_a, &raw_a));
        let nb = libm::sqrt(dot(&raw_b, &raw_b));
        let manual = dot(&raw_a, &raw_b) / (na * nb);
        assert!((manual - dot(m.row(0), m.row(1))).abs() < 1e-9);
    }
}
