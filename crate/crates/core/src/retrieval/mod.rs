//! Transition corpus and three-stage hybrid retrieval.
//!
//! Stage 1 ranks corpus records by BM25 over their rendered action histories.
//! Stage 2 hands the survivors to a [`Reranker`]. Stage 3 scores the reranked
//! candidates by BM25 over `observation + history` keys and keeps the best
//! one. Stage-3 term statistics come from the whole corpus, since a handful
//! of candidates is too few for a meaningful idf.

mod bm25;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::ActionHistory;
use crate::axtree::{Domain, UiState};
use crate::client::{ChatClient, ModelError};
use crate::prompt::{names, sections, TemplateSet};

pub use bm25::{tokenize, Bm25Index, Bm25Params};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("transition corpus is empty")]
    EmptyCorpus,
    #[error("document id {0} appears twice")]
    DuplicateDocId(usize),
    #[error("invalid corpus record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
}

/// One real-environment transition: observation and history before the
/// action, observation after, and both full states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub obs_before: String,
    pub history: ActionHistory,
    pub obs_after: String,
    pub state_before: UiState,
    pub state_after: UiState,
    pub domain: Domain,
}

impl TransitionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.history.is_empty() {
            return Err("history is empty".to_string());
        }
        if self.state_before.domain() != self.domain || self.state_after.domain() != self.domain {
            return Err("state domain differs from record domain".to_string());
        }
        Ok(())
    }

    /// Stage-3 key: observation text followed by the rendered history.
    pub fn composite_key(&self) -> String {
        composite(&self.obs_before, &self.history)
    }
}

fn composite(obs: &str, history: &ActionHistory) -> String {
    let mut s = String::from(obs);
    s.push('\n');
    s.push_str(&history.render());
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("reranker failed: {0}")]
pub struct RerankError(pub String);

impl From<ModelError> for RerankError {
    fn from(e: ModelError) -> Self {
        RerankError(e.to_string())
    }
}

/// Narrows candidate action sequences to the ones closest to `query`.
/// Returns indices into `candidates`, best first, at most `top_k` of them.
pub trait Reranker {
    fn rerank(&self, query: &str, candidates: &[&str], top_k: usize) -> Result<Vec<usize>, RerankError>;
}

impl<T: Reranker + ?Sized> Reranker for &T {
    fn rerank(&self, query: &str, candidates: &[&str], top_k: usize) -> Result<Vec<usize>, RerankError> {
        (**self).rerank(query, candidates, top_k)
    }
}

/// Keeps the incoming order.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityReranker;

impl Reranker for IdentityReranker {
    fn rerank(&self, _query: &str, candidates: &[&str], top_k: usize) -> Result<Vec<usize>, RerankError> {
        Ok((0..candidates.len().min(top_k)).collect())
    }
}

/// Jaccard overlap of token sets; ties keep the incoming order.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

impl Reranker for LexicalReranker {
    fn rerank(&self, query: &str, candidates: &[&str], top_k: usize) -> Result<Vec<usize>, RerankError> {
        let q: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scored: Vec<(usize, f64)> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let t: BTreeSet<String> = tokenize(c).into_iter().collect();
                let union = q.union(&t).count();
                let score = if union == 0 { 0.0 } else { q.intersection(&t).count() as f64 / union as f64 };
                (i, score)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored.into_iter().take(top_k).map(|(i, _)| i).collect())
    }
}

/// Asks a chat model which candidates do nearly the same thing as the query.
pub struct LlmReranker<'a, C: ?Sized> {
    pub client: &'a C,
    pub templates: &'a TemplateSet,
    pub domain: Domain,
}

impl<C: ChatClient + ?Sized> Reranker for LlmReranker<'_, C> {
    fn rerank(&self, query: &str, candidates: &[&str], top_k: usize) -> Result<Vec<usize>, RerankError> {
        let mut listing = String::new();
        for (i, c) in candidates.iter().enumerate() {
            listing.push_str(&alloc::format!("Candidate {}:\n{}\n\n", i + 1, c));
        }
        let k = top_k.to_string();
        let prompt = self
            .templates
            .render(self.domain, names::RERANK, &[("query", query), ("candidates", listing.trim_end()), ("top_k", &k)])
            .map_err(|e| RerankError(e.to_string()))?;
        let reply = self.client.complete(&prompt)?;
        let parsed = parse_ranking(&reply, candidates.len(), top_k);
        if parsed.is_empty() {
            return Err(RerankError("no candidate numbers in the ranking".to_string()));
        }
        Ok(parsed)
    }
}

/// 1-based candidate numbers from a `Ranking:` line, deduplicated and
/// range-checked, returned 0-based.
pub fn parse_ranking(reply: &str, n: usize, top_k: usize) -> Vec<usize> {
    let secs = sections(reply, &["Thought", "Ranking"]);
    let Some(line) = secs.get("Ranking") else { return Vec::new() };
    let mut out = Vec::new();
    for tok in line.split(|c: char| !c.is_ascii_digit()).filter(|t| !t.is_empty()) {
        if let Ok(v) = tok.parse::<usize>() {
            if (1..=n).contains(&v) && !out.contains(&(v - 1)) {
                out.push(v - 1);
            }
        }
        if out.len() == top_k {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_k1: usize,
    pub top_k2: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { top_k1: 20, top_k2: 5 }
    }
}

/// Result of one lookup with the intermediate candidate lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    /// Index of the chosen record in the corpus.
    pub record: usize,
    pub stage1: Vec<usize>,
    pub stage2: Vec<usize>,
    /// Set when the reranker failed and stage-1 order was used instead.
    pub reranker_fallback: Option<String>,
}

/// Immutable corpus plus its stage-1 index.
#[derive(Debug, Clone)]
pub struct TransitionCorpus {
    records: Vec<TransitionRecord>,
    history_index: Bm25Index,
    key_index: Bm25Index,
    config: RetrievalConfig,
}

impl TransitionCorpus {
    pub fn new(records: Vec<TransitionRecord>, config: RetrievalConfig) -> Result<Self, RetrievalError> {
        if records.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        for (index, r) in records.iter().enumerate() {
            r.validate().map_err(|reason| RetrievalError::InvalidRecord { index, reason })?;
        }
        let history_index = Bm25Index::build(records.iter().enumerate().map(|(i, r)| (i, r.history.render())))?;
        let key_index = Bm25Index::build(records.iter().enumerate().map(|(i, r)| (i, r.composite_key())))?;
        Ok(Self { records, history_index, key_index, config })
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn get(&self, i: usize) -> Option<&TransitionRecord> {
        self.records.get(i)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn config(&self) -> RetrievalConfig {
        self.config
    }

    pub fn retrieve<R: Reranker + ?Sized>(
        &self,
        observation_text: &str,
        history: &ActionHistory,
        reranker: &R,
    ) -> Result<Retrieval, RetrievalError> {
        let query = history.render();
        let stage1: Vec<usize> =
            self.history_index.top_k(&query, self.config.top_k1.max(1)).into_iter().map(|(i, _)| i).collect();

        let rendered: Vec<String> = stage1.iter().map(|&i| self.records[i].history.render()).collect();
        let views: Vec<&str> = rendered.iter().map(String::as_str).collect();
        let k2 = self.config.top_k2.max(1);
        let (stage2, reranker_fallback) = match reranker.rerank(&query, &views, k2) {
            Ok(order) => {
                let mut picked: Vec<usize> = Vec::new();
                for j in order {
                    if j < stage1.len() && !picked.contains(&stage1[j]) {
                        picked.push(stage1[j]);
                    }
                }
                if picked.is_empty() {
                    (stage1.iter().copied().take(k2).collect(), Some("reranker returned no candidates".to_string()))
                } else {
                    picked.truncate(k2);
                    (picked, None)
                }
            }
            Err(e) => (stage1.iter().copied().take(k2).collect(), Some(e.0)),
        };

        let scores = self.key_index.scores(&composite(observation_text, history));
        let record = stage2
            .iter()
            .map(|&i| (i, scores[i].1))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("stage 2 is never empty");
        Ok(Retrieval { record, stage1, stage2, reranker_fallback })
    }
}
