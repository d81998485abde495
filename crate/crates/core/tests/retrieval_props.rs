mod oracles;

use std::collections::HashMap;
use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uisim_core::axtree::Domain;
use uisim_core::retrieval::Bm25Index;
use uisim_core::retrieval::{IdentityReranker, LexicalReranker, RetrievalConfig, TransitionCorpus};
use uisim_core::testing::{random_corpus, random_history, words};

#[test]
fn bm25_matches_oracle_on_120_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb325);
    for c in 0..120 {
        let n = rng.random_range(1..40);
        let docs: Vec<String> = (0..n).map(|_| words(&mut rng, 25)).collect();
        let index = Bm25Index::build(docs.iter().enumerate().map(|(i, d)| (i, d.as_str()))).unwrap();
        for _ in 0..5 {
            let q = words(&mut rng, 6);
            let want = oracles::bm25_oracle(&docs, &q);
            for ((id, got), w) in index.scores(&q).into_iter().zip(want) {
                assert!((got - w).abs() <= 1e-9, "corpus {c} doc {id}: {got} vs {w}");
            }
        }
    }
}

#[test]
fn hand_computed_two_documents() {
    // "cart" appears in one of three docs: idf = ln(2.5/1.5)
    let docs = ["cart total".to_string(), "order".to_string(), "search map".to_string()];
    let index = Bm25Index::build(docs.iter().enumerate().map(|(i, d)| (i, d.as_str()))).unwrap();
    let avg = 5.0 / 3.0;
    let want = (2.5f64 / 1.5).ln() * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / avg));
    let s = index.scores("Cart");
    assert!((s[0].1 - want).abs() < 1e-12);
    assert_eq!((s[1].1, s[2].1), (0.0, 0.0));
}

fn timed_corpus(n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = random_corpus(&mut rng, Domain::Web, n);
    let started = Instant::now();
    let corpus = TransitionCorpus::new(records, RetrievalConfig::default()).unwrap();
    let h = random_history(&mut rng, Domain::Web, 3, 60);
    corpus.retrieve("", &h, &LexicalReranker).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 10.0, "{n} records took {secs}s");
}

#[test]
fn large_corpora_index_quickly() {
    timed_corpus(1647, 1);
    timed_corpus(683, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stages_narrow_monotonically(seed in any::<u64>(), k1 in 1usize..25, k2 in 1usize..8, lexical in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..30);
        let corpus = TransitionCorpus::new(random_corpus(&mut rng, Domain::Web, n), RetrievalConfig { top_k1: k1, top_k2: k2 }).unwrap();
        let h = random_history(&mut rng, Domain::Web, 3, 60);
        let r = if lexical {
            corpus.retrieve("search cart", &h, &LexicalReranker).unwrap()
        } else {
            corpus.retrieve("search cart", &h, &IdentityReranker).unwrap()
        };
        prop_assert!(r.stage1.len() <= k1.min(n));
        prop_assert!(r.stage2.len() <= k2.min(r.stage1.len()));
        prop_assert!(r.stage2.iter().all(|i| r.stage1.contains(i)));
        prop_assert!(r.stage2.contains(&r.record));
        let mut uniq: HashMap<usize, ()> = HashMap::new();
        prop_assert!(r.stage1.iter().all(|i| uniq.insert(*i, ()).is_none()));
    }
}
