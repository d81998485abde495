use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::RetrievalError;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Posting {
    doc: usize,
    tf: u32,
}

/// Inverted index with Okapi BM25 scoring.
///
/// `idf(t) = max(0, ln((N - df + 0.5) / (df + 0.5)))`, so terms present in
/// at least half of the documents contribute nothing and scores are never
/// negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<usize>,
    doc_len: Vec<u32>,
    avg_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl Bm25Index {
    pub fn build<I, S>(docs: I) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (usize, S)>,
        S: AsRef<str>,
    {
        Self::with_params(docs, Bm25Params::default())
    }

    pub fn with_params<I, S>(docs: I, params: Bm25Params) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (usize, S)>,
        S: AsRef<str>,
    {
        let mut seen = BTreeSet::new();
        let mut doc_ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (id, text) in docs {
            if !seen.insert(id) {
                return Err(RetrievalError::DuplicateDocId(id));
            }
            let slot = doc_ids.len();
            doc_ids.push(id);
            let tokens = tokenize(text.as_ref());
            doc_len.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push(Posting { doc: slot, tf: n });
            }
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avg_len = if doc_ids.is_empty() { 0.0 } else { total as f64 / doc_ids.len() as f64 };
        Ok(Self { params, doc_ids, doc_len, avg_len, postings })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        libm::log((n - df + 0.5) / (df + 0.5)).max(0.0)
    }

    /// Score of every document, in insertion order, as `(doc_id, score)`.
    pub fn scores(&self, query: &str) -> Vec<(usize, f64)> {
        let mut acc = alloc::vec![0.0f64; self.doc_ids.len()];
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let Bm25Params { k1, b } = self.params;
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            if idf == 0.0 {
                continue;
            }
            for p in list {
                let tf = f64::from(p.tf);
                let norm = if self.avg_len > 0.0 { f64::from(self.doc_len[p.doc]) / self.avg_len } else { 1.0 };
                acc[p.doc] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            }
        }
        self.doc_ids.iter().copied().zip(acc).collect()
    }

    /// Best `k` documents, highest score first, ties by ascending doc id.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<(usize, f64)> {
        let mut s = self.scores(query);
        s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        s.truncate(k);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenization() {
        assert_eq!(tokenize("Click [3706]: Open-Orders"), ["click", "3706", "open", "orders"]);
    }

    #[test]
    fn single_doc_ranks_first() {
        let idx = Bm25Index::build([(7, "a b")]).unwrap();
        assert_eq!(idx.top_k("a", 1)[0].0, 7);
    }

    #[test]
    fn oov_query_scores_zero() {
        let idx = Bm25Index::build([(0, "red shoe"), (1, "blue hat"), (2, "green scarf")]).unwrap();
        assert!(idx.scores("zebra").iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert_eq!(Bm25Index::build([(1, "a"), (1, "b")]).unwrap_err(), RetrievalError::DuplicateDocId(1));
    }

    #[test]
    fn hand_computed_table() {
        // N = 3, lengths 3, 2, 4, avgdl = 3.
        // "apple" df = 1: idf = ln(2.5 / 1.5); "pie" df = 2: idf = ln(1.5 / 2.5) < 0 -> 0.
        let idx = Bm25Index::build([(0, "apple apple pie"), (1, "pie crust"), (2, "cherry tart with cream")]).unwrap();
        let s = idx.scores("apple pie");
        let idf = (2.5f64 / 1.5).ln();
        // doc 0: tf = 2, dl/avgdl = 1 -> 2 * 2.2 / (2 + 1.2) = 1.375
        let expected0 = idf * 1.375;
        assert!((s[0].1 - expected0).abs() < 1e-12);
        assert_eq!(s[1].1, 0.0);
        assert_eq!(s[2].1, 0.0);
    }
}
