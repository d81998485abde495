use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use uisim::gateway::{fingerprint, HttpBackend, Limited, Limiter, Replay, ReplayStore, Retry};
use uisim_core::client::mock::{NgramEmbedder, UniformLogprob};
use uisim_core::client::{dot, ChatClient, ChatParams, EmbeddingClient, EmbeddingMatrix, LogprobClient, ModelError, Prompt};
use uisim_core::scripted::ScriptedLlm;

fn prompt(i: usize) -> Prompt {
    Prompt::new(format!("web/t{}", i % 3), "system text", format!("user {i} with \"quotes\" and ünïcode\n"))
}

/// Echoes a hash of the prompt; counts calls.
#[derive(Default)]
struct Echo {
    calls: AtomicUsize,
}

impl ChatClient for Echo {
    fn complete(&self, p: &Prompt) -> Result<String, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(format!("reply to {} / {}", p.template_id, fingerprint("x", "", &p.user)))
    }
}

#[test]
fn fingerprints_separate_role_and_template() {
    let a = fingerprint("teacher", "web/overview", "hello");
    assert_eq!(a, fingerprint("teacher", "web/overview", "hello"));
    assert_ne!(a, fingerprint("simulator", "web/overview", "hello"));
    assert_ne!(a, fingerprint("teacher", "web/draft", "hello"));
    // the separator keeps field boundaries apart
    assert_ne!(fingerprint("ab", "c", "d"), fingerprint("a", "bc", "d"));
    assert_eq!(a.len(), 64);
}

#[test]
fn strict_replay_misses_and_hits() {
    let store = Arc::new(ReplayStore::in_memory());
    let strict: Replay<Echo> = Replay::strict(store.clone(), "teacher");
    let err = strict.complete(&prompt(0)).unwrap_err();
    assert!(matches!(err, ModelError::ReplayMiss { .. }));

    let capture = Replay::capture(store.clone(), "teacher", Echo::default());
    let live = capture.complete(&prompt(0)).unwrap();
    assert_eq!(strict.complete(&prompt(0)).unwrap(), live);
    // a different role has its own recordings
    let other: Replay<Echo> = Replay::strict(store, "simulator");
    assert!(other.complete(&prompt(0)).is_err());
}

#[test]
fn capture_then_replay_50_calls_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replay.jsonl");
    let inner = Echo::default();
    let live: Vec<String> = {
        let cap = Replay::capture(Arc::new(ReplayStore::capture(&path).unwrap()), "teacher", &inner);
        (0..50).map(|i| cap.complete(&prompt(i)).unwrap()).collect()
    };
    assert_eq!(inner.calls.load(Ordering::SeqCst), 50);
    let store = Arc::new(ReplayStore::load(&path).unwrap());
    assert_eq!(store.len(), 50);
    let strict: Replay<Echo> = Replay::strict(store, "teacher");
    let replayed: Vec<String> = (0..50).map(|i| strict.complete(&prompt(i)).unwrap()).collect();
    assert_eq!(replayed, live);

    // capturing again over the same file issues no new calls
    let inner2 = Echo::default();
    let cap = Replay::capture(Arc::new(ReplayStore::capture(&path).unwrap()), "teacher", &inner2);
    for i in 0..50 {
        cap.complete(&prompt(i)).unwrap();
    }
    assert_eq!(inner2.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn scorer_and_embedder_replay_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let texts: Vec<String> = ["abc", "abd", "click the cart", "abc"].iter().map(|s| s.to_string()).collect();
    let (m1, lp1) = {
        let store = Arc::new(ReplayStore::capture(&path).unwrap());
        let e = Replay::capture(store.clone(), "embedder", NgramEmbedder::default());
        let s = Replay::capture(store, "scorer", uisim_core::client::mock::HashedLogprob::default());
        (e.embed(&texts).unwrap(), s.score_tokens("prompt", "click [3]").unwrap())
    };
    let store = Arc::new(ReplayStore::load(&path).unwrap());
    let e: Replay<NgramEmbedder> = Replay::strict(store.clone(), "embedder");
    let s: Replay<UniformLogprob> = Replay::strict(store, "scorer");
    assert_eq!(e.embed(&texts).unwrap(), m1);
    assert_eq!(s.score_tokens("prompt", "click [3]").unwrap(), lp1);
    assert!(matches!(s.score_tokens("prompt", "click [4]"), Err(ModelError::ReplayMiss { .. })));
}

#[test]
fn uniform_mock_and_empty_target() {
    let u = UniformLogprob::new(2);
    let lps = u.score_tokens("p", "type [3] [hello world] [1]").unwrap();
    assert!(!lps.is_empty());
    assert!(lps.iter().all(|v| (v - 0.5f64.ln()).abs() < 1e-12));
    assert!(u.score_tokens("p", "").unwrap().is_empty());
}

#[test]
fn embedding_cosine_two_ways() {
    let e = NgramEmbedder::default();
    let m = e.embed(&["abc".to_string(), "abd".to_string(), "abc".to_string()]).unwrap();
    assert_eq!(m.row(0), m.row(2));
    let (a, b) = (e.embed_one("abc"), e.embed_one("abd"));
    let manual: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
        / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt());
    assert!((dot(m.row(0), m.row(1)) - manual).abs() < 1e-9);
}

/// Fails with a transient error `failures` times, then answers.
struct Flaky {
    failures: usize,
    calls: AtomicUsize,
    error: ModelError,
}

impl ChatClient for Flaky {
    fn complete(&self, _: &Prompt) -> Result<String, ModelError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            Err(self.error.clone())
        } else {
            Ok("ok".into())
        }
    }
}

fn flaky(failures: usize, error: ModelError) -> Flaky {
    Flaky { failures, calls: AtomicUsize::new(0), error }
}

#[test]
fn retries_three_attempts_with_backoff() {
    let r = Retry::with_policy(flaky(2, ModelError::Timeout), 3, Duration::from_millis(5));
    let started = std::time::Instant::now();
    assert_eq!(r.complete(&prompt(0)).unwrap(), "ok");
    // 5 ms then 10 ms
    assert!(started.elapsed() >= Duration::from_millis(15));

    let inner = flaky(3, ModelError::Backend("503".into()));
    let r = Retry::with_policy(&inner, 3, Duration::from_millis(1));
    assert!(r.complete(&prompt(0)).is_err());
    assert_eq!(inner.calls.load(Ordering::SeqCst), 3);

    let inner = flaky(1, ModelError::InvalidInput("bad".into()));
    let r = Retry::with_policy(&inner, 3, Duration::from_millis(1));
    assert!(r.complete(&prompt(0)).is_err());
    assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
}

/// Tracks the number of calls in flight.
#[derive(Default)]
struct Instrumented {
    now: AtomicUsize,
    peak: AtomicUsize,
}

impl ChatClient for Instrumented {
    fn complete(&self, _: &Prompt) -> Result<String, ModelError> {
        let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(n, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(10));
        self.now.fetch_sub(1, Ordering::SeqCst);
        Ok(String::new())
    }
}

#[test]
fn limiter_caps_in_flight_calls() {
    let probe = Instrumented::default();
    let limiter = Limiter::new(3);
    // two roles share one cap
    let a = Limited::new(&probe, limiter.clone());
    let b = Limited::new(&probe, limiter);
    std::thread::scope(|s| {
        for t in 0..16 {
            let c: &dyn ChatClient = if t % 2 == 0 { &a } else { &b };
            s.spawn(move || {
                for i in 0..4 {
                    c.complete(&prompt(i)).unwrap();
                }
            });
        }
    });
    assert_eq!(probe.peak.load(Ordering::SeqCst), 3);
}

type Seen = Arc<Mutex<Vec<(HeaderMap, Value)>>>;

async fn chat(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    seen.lock().unwrap().push((headers, body.clone()));
    let user = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_owned();
    Json(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": format!("echo: {user}")}}]}))
}

async fn embeddings(Json(body): Json<Value>) -> Json<Value> {
    let data: Vec<Value> = body["input"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| json!({"index": i, "embedding": [t.as_str().unwrap().len() as f64, 1.0]}))
        .collect();
    Json(json!({ "data": data }))
}

/// Whitespace tokenizer: each token carries its offset and a fixed log-prob.
async fn completions(Json(body): Json<Value>) -> Json<Value> {
    let text = body["prompt"].as_str().unwrap();
    let mut offsets = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                offsets.push(s);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        offsets.push(s);
    }
    let lps: Vec<Value> = offsets.iter().enumerate().map(|(k, _)| if k == 0 { Value::Null } else { json!(-0.25) }).collect();
    Json(json!({"choices": [{"text": text, "logprobs": {"text_offset": offsets, "token_logprobs": lps}}]}))
}

fn stub_server() -> (String, Seen) {
    let seen: Seen = Arc::default();
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .route("/v1/completions", post(completions))
        .route("/denied/chat/completions", post(|| async { (StatusCode::UNAUTHORIZED, "no key") }))
        .route("/busy/chat/completions", post(|| async { (StatusCode::TOO_MANY_REQUESTS, "slow down") }))
        .with_state(seen.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}/v1", rx.recv().unwrap()), seen)
}

#[test]
fn http_backend_speaks_chat_completions() {
    let (base, seen) = stub_server();
    let b = HttpBackend::new(&base, Some("sk-test".into()), "teacher-model", ChatParams::new(0.5, 64).unwrap(), Duration::from_secs(10));
    assert_eq!(b.complete(&prompt(1)).unwrap(), format!("echo: {}", prompt(1).user));
    let (headers, body) = seen.lock().unwrap()[0].clone();
    assert_eq!(headers["authorization"], "Bearer sk-test");
    assert_eq!(body["model"], "teacher-model");
    assert_eq!(body["temperature"], 0.5);
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["messages"][0]["role"], "system");

    // out-of-order embedding rows are put back in input order and normalized
    let m = b.embed(&["a".to_string(), "abc".to_string()]).unwrap();
    let want = EmbeddingMatrix::from_rows(vec![vec![1.0, 1.0], vec![3.0, 1.0]]).unwrap();
    assert_eq!(m, want);
}

#[test]
fn http_scoring_returns_one_value_per_target_token() {
    let (base, _) = stub_server();
    let b = HttpBackend::new(&base, None, "student", ChatParams::student(), Duration::from_secs(10));
    let mut rng_state = 7u64;
    for _ in 0..100 {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let words = 1 + (rng_state >> 60) as usize;
        let target: String = (0..words).map(|k| format!(" w{}x{k}", rng_state % 97)).collect();
        let lps = b.score_tokens("Task: find it\nNext action:", &target).unwrap();
        assert_eq!(lps.len(), target.split_whitespace().count());
        assert!(lps.iter().all(|v| *v <= 0.0 && v.is_finite()));
    }
    assert!(b.score_tokens("p", "").unwrap().is_empty());
}

#[test]
fn http_errors_are_transient_backend_errors() {
    let b = HttpBackend::new("http://127.0.0.1:9", None, "m", ChatParams::generation(), Duration::from_millis(500));
    let e = b.complete(&prompt(0)).unwrap_err();
    assert!(e.is_transient(), "{e:?}");
}

#[test]
fn scripted_backend_is_deterministic_through_replay() {
    let store = Arc::new(ReplayStore::in_memory());
    let cap = Replay::capture(store.clone(), "teacher", ScriptedLlm::default());
    let strict: Replay<ScriptedLlm> = Replay::strict(store, "teacher");
    let p = Prompt::new("web/summarize", "", "anything");
    assert_eq!(cap.complete(&p).unwrap(), strict.complete(&p).unwrap());
}

#[test]
fn client_errors_are_not_retried_but_throttling_is() {
    let (base, _) = stub_server();
    let root = base.trim_end_matches("/v1");
    let params = ChatParams::generation();
    let denied = HttpBackend::new(&format!("{root}/denied"), None, "m", params, Duration::from_secs(5));
    assert!(matches!(denied.complete(&prompt(0)), Err(ModelError::InvalidInput(_))));
    let busy = HttpBackend::new(&format!("{root}/busy"), None, "m", params, Duration::from_secs(5));
    assert!(busy.complete(&prompt(0)).unwrap_err().is_transient());
}
