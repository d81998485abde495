//! Model backends: record/replay, retries, a concurrency cap and an HTTP
//! client speaking the chat-completions wire format.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use uisim_core::client::{ChatClient, ChatParams, EmbeddingClient, EmbeddingMatrix, LogprobClient, ModelError, Prompt};

pub const API_KEY_VAR: &str = "UISIM_API_KEY";
pub const BASE_URL_VAR: &str = "UISIM_BASE_URL";

/// Hex SHA-256 of role, template id and resolved prompt, NUL-separated.
pub fn fingerprint(role: &str, template_id: &str, resolved: &str) -> String {
    let mut h = Sha256::new();
    for part in [role, template_id, resolved] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    format!("{:x}", h.finalize())
}

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub fingerprint: String,
    pub role: String,
    pub response: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
}

/// Fingerprint → response map, optionally appending new entries to a file.
///
/// Readers run concurrently; capture writes are serialized and flushed per
/// entry, so an interrupted run keeps what it recorded.
#[derive(Debug, Default)]
pub struct ReplayStore {
    entries: RwLock<HashMap<String, Value>>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl ReplayStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Read-only store over an existing file.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Ok(Self { entries: RwLock::new(read_entries(path)?), sink: None })
    }

    /// Loads `path` if it exists and appends every new entry to it.
    pub fn capture(path: &Path) -> Result<Self, StoreError> {
        let entries = if path.exists() { read_entries(path)? } else { HashMap::new() };
        let io = |source| StoreError::Io { path: path.to_owned(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self { entries: RwLock::new(entries), sink: Some(Mutex::new(BufWriter::new(file))) })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("replay store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, fingerprint: &str) -> Option<Value> {
        self.entries.read().expect("replay store lock").get(fingerprint).cloned()
    }

    /// Stores an entry; the first response for a fingerprint wins.
    pub fn record(&self, entry: ReplayEntry) -> std::io::Result<()> {
        {
            let mut map = self.entries.write().expect("replay store lock");
            if map.contains_key(&entry.fingerprint) {
                return Ok(());
            }
            map.insert(entry.fingerprint.clone(), entry.response.clone());
        }
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().expect("replay sink lock");
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

fn read_entries(path: &Path) -> Result<HashMap<String, Value>, StoreError> {
    let file = File::open(path).map_err(|source| StoreError::Io { path: path.to_owned(), source })?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io { path: path.to_owned(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ReplayEntry =
            serde_json::from_str(&line).map_err(|source| StoreError::Parse { path: path.to_owned(), line: i + 1, source })?;
        map.entry(e.fingerprint).or_insert(e.response);
    }
    Ok(map)
}

/// Answers from a [`ReplayStore`]. With an inner backend, misses are
/// forwarded and recorded (capture); without one they are `ReplayMiss`.
pub struct Replay<B> {
    store: Arc<ReplayStore>,
    inner: Option<B>,
    role: String,
}

impl<B> Replay<B> {
    pub fn strict(store: Arc<ReplayStore>, role: impl Into<String>) -> Self {
        Self { store, inner: None, role: role.into() }
    }

    pub fn capture(store: Arc<ReplayStore>, role: impl Into<String>, inner: B) -> Self {
        Self { store, inner: Some(inner), role: role.into() }
    }

    fn lookup<T, F>(&self, fp: String, call: F, decode: fn(Value) -> Option<T>, encode: fn(&T) -> Value) -> Result<T, ModelError>
    where
        F: FnOnce(&B) -> Result<T, ModelError>,
    {
        if let Some(v) = self.store.get(&fp) {
            return decode(v).ok_or_else(|| ModelError::Backend(format!("replay entry {fp} has the wrong shape")));
        }
        let inner = self.inner.as_ref().ok_or(ModelError::ReplayMiss { fingerprint: fp.clone() })?;
        let out = call(inner)?;
        self.store
            .record(ReplayEntry { fingerprint: fp, role: self.role.clone(), response: encode(&out) })
            .map_err(|e| ModelError::Backend(format!("writing replay entry: {e}")))?;
        Ok(out)
    }
}

fn floats(v: Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

impl<B: ChatClient> ChatClient for Replay<B> {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        let fp = fingerprint(&self.role, &prompt.template_id, &prompt.resolved());
        self.lookup(fp, |b| b.complete(prompt), |v| v.as_str().map(str::to_owned), |s| Value::String(s.clone()))
    }
}

impl<B: LogprobClient> LogprobClient for Replay<B> {
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        let fp = fingerprint(&self.role, "score", &format!("{prompt}\0{target}"));
        self.lookup(fp, |b| b.score_tokens(prompt, target), floats, |v| json!(v))
    }
}

impl<B: EmbeddingClient> EmbeddingClient for Replay<B> {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        if texts.is_empty() {
            return Err(ModelError::InvalidInput("nothing to embed".into()));
        }
        let fps: Vec<String> = texts.iter().map(|t| fingerprint(&self.role, "embed", t)).collect();
        let mut rows: Vec<Option<Vec<f64>>> = fps.iter().map(|fp| self.store.get(fp).and_then(floats)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| rows[i].is_none()).collect();
        if !missing.is_empty() {
            let inner =
                self.inner.as_ref().ok_or_else(|| ModelError::ReplayMiss { fingerprint: fps[missing[0]].clone() })?;
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let m = inner.embed(&batch)?;
            for (k, &i) in missing.iter().enumerate() {
                let row = m.row(k).to_vec();
                self.store
                    .record(ReplayEntry { fingerprint: fps[i].clone(), role: self.role.clone(), response: json!(row) })
                    .map_err(|e| ModelError::Backend(format!("writing replay entry: {e}")))?;
                rows[i] = Some(row);
            }
        }
        EmbeddingMatrix::from_rows(rows.into_iter().map(|r| r.expect("filled above")).collect())
    }
}

/// Up to `attempts` tries on transient errors, sleeping `base_delay * 2^k`
/// before retry `k + 1`.
pub struct Retry<B> {
    inner: B,
    attempts: u32,
    base_delay: Duration,
}

impl<B> Retry<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, attempts: 3, base_delay: Duration::from_millis(500) }
    }

    pub fn with_policy(inner: B, attempts: u32, base_delay: Duration) -> Self {
        Self { inner, attempts: attempts.max(1), base_delay }
    }

    fn run<T>(&self, mut f: impl FnMut(&B) -> Result<T, ModelError>) -> Result<T, ModelError> {
        let mut k = 0;
        loop {
            match f(&self.inner) {
                Err(e) if e.is_transient() && k + 1 < self.attempts => {
                    let wait = self.base_delay * 2u32.saturating_pow(k);
                    log::warn!("transient model error ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    k += 1;
                }
                other => return other,
            }
        }
    }
}

impl<B: ChatClient> ChatClient for Retry<B> {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        self.run(|b| b.complete(prompt))
    }
}

impl<B: LogprobClient> LogprobClient for Retry<B> {
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        self.run(|b| b.score_tokens(prompt, target))
    }
}

impl<B: EmbeddingClient> EmbeddingClient for Retry<B> {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        self.run(|b| b.embed(texts))
    }
}

/// Counting semaphore shared by every backend that should respect one cap.
#[derive(Debug)]
pub struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    pub fn new(permits: usize) -> Arc<Self> {
        Arc::new(Self { free: Mutex::new(permits.max(1)), cv: Condvar::new() })
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter lock");
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Holds a limiter permit for the duration of every call.
pub struct Limited<B> {
    inner: B,
    limiter: Arc<Limiter>,
}

impl<B> Limited<B> {
    pub fn new(inner: B, limiter: Arc<Limiter>) -> Self {
        Self { inner, limiter }
    }
}

impl<B: ChatClient> ChatClient for Limited<B> {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        let _p = self.limiter.acquire();
        self.inner.complete(prompt)
    }
}

impl<B: LogprobClient> LogprobClient for Limited<B> {
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        let _p = self.limiter.acquire();
        self.inner.score_tokens(prompt, target)
    }
}

impl<B: EmbeddingClient> EmbeddingClient for Limited<B> {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        let _p = self.limiter.acquire();
        self.inner.embed(texts)
    }
}

/// OpenAI-compatible HTTP backend: `/chat/completions`, `/embeddings`, and
/// `/completions` with `echo` for target scoring.
#[derive(Clone)]
pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
    model: String,
    params: ChatParams,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("base_url", &self.base_url).field("model", &self.model).finish()
    }
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str, params: ChatParams, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { agent, base_url: base_url.trim_end_matches('/').to_owned(), api_key, model: model.to_owned(), params }
    }

    /// Base URL and key from the environment.
    pub fn from_env(model: &str, params: ChatParams, timeout: Duration) -> Result<Self, ModelError> {
        let base = std::env::var(BASE_URL_VAR).map_err(|_| ModelError::Backend(format!("{BASE_URL_VAR} is not set")))?;
        Ok(Self::new(&base, std::env::var(API_KEY_VAR).ok(), model, params, timeout))
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ModelError> {
        let mut req = self.agent.post(&format!("{}{path}", self.base_url)).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ModelError::Timeout,
            // rejected requests fail the same way on every attempt
            ureq::Error::StatusCode(c) if (400..500).contains(&c) && c != 408 && c != 429 => {
                ModelError::InvalidInput(format!("{path} returned HTTP {c}"))
            }
            other => ModelError::Backend(other.to_string()),
        })?;
        resp.body_mut().read_json::<Value>().map_err(|e| ModelError::Backend(format!("bad response body: {e}")))
    }
}

fn shape(what: &str) -> ModelError {
    ModelError::Backend(format!("response is missing {what}"))
}

impl ChatClient for HttpBackend {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        let mut messages = Vec::new();
        if !prompt.system.is_empty() {
            messages.push(json!({"role": "system", "content": prompt.system}));
        }
        messages.push(json!({"role": "user", "content": prompt.user}));
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
        });
        let v = self.post("/chat/completions", &body)?;
        v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_owned).ok_or_else(|| shape("choices[0].message.content"))
    }
}

impl EmbeddingClient for HttpBackend {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        if texts.is_empty() {
            return Err(ModelError::InvalidInput("nothing to embed".into()));
        }
        let v = self.post("/embeddings", &json!({"model": self.model, "input": texts}))?;
        let data = v.get("data").and_then(Value::as_array).ok_or_else(|| shape("data"))?;
        let mut rows: Vec<(u64, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let idx = d.get("index").and_then(Value::as_u64).unwrap_or(i as u64);
                let emb = d.get("embedding").cloned().and_then(floats).ok_or_else(|| shape("data[].embedding"))?;
                Ok((idx, emb))
            })
            .collect::<Result<_, ModelError>>()?;
        if rows.len() != texts.len() {
            return Err(ModelError::Backend(format!("{} embeddings for {} inputs", rows.len(), texts.len())));
        }
        rows.sort_by_key(|r| r.0);
        EmbeddingMatrix::from_rows(rows.into_iter().map(|r| r.1).collect())
    }
}

impl LogprobClient for HttpBackend {
    /// Scores `prompt ++ target` with echo and keeps the tokens that start
    /// inside the target.
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        if target.is_empty() {
            return Ok(Vec::new());
        }
        let full = format!("{prompt}{target}");
        let body = json!({"model": self.model, "prompt": full, "max_tokens": 1, "echo": true, "logprobs": 0, "temperature": 0.0});
        let v = self.post("/completions", &body)?;
        let lp = v.pointer("/choices/0/logprobs").ok_or_else(|| shape("choices[0].logprobs"))?;
        let offsets = lp.get("text_offset").and_then(Value::as_array).ok_or_else(|| shape("logprobs.text_offset"))?;
        let values = lp.get("token_logprobs").and_then(Value::as_array).ok_or_else(|| shape("logprobs.token_logprobs"))?;
        let mut out = Vec::new();
        for (off, val) in offsets.iter().zip(values) {
            let off = off.as_u64().ok_or_else(|| shape("numeric text_offset"))? as usize;
            if off >= prompt.len() && off < full.len() {
                out.push(val.as_f64().ok_or_else(|| shape("numeric token_logprobs"))?);
            }
        }
        if out.is_empty() {
            return Err(ModelError::Unsupported("backend did not echo target log-probabilities".into()));
        }
        Ok(out)
    }
}

/// Remembers the first error that passed through, so a command can tell a
/// backend failure apart from data it rejected.
pub struct FaultWatch<B> {
    inner: B,
    first: Arc<Mutex<Option<ModelError>>>,
}

impl<B> FaultWatch<B> {
    pub fn new(inner: B, first: Arc<Mutex<Option<ModelError>>>) -> Self {
        Self { inner, first }
    }

    fn note<T>(&self, r: Result<T, ModelError>) -> Result<T, ModelError> {
        if let Err(e) = &r {
            self.first.lock().expect("fault lock").get_or_insert_with(|| e.clone());
        }
        r
    }
}

impl<B: ChatClient> ChatClient for FaultWatch<B> {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        self.note(self.inner.complete(prompt))
    }
}

impl<B: LogprobClient> LogprobClient for FaultWatch<B> {
    fn score_tokens(&self, prompt: &str, target: &str) -> Result<Vec<f64>, ModelError> {
        self.note(self.inner.score_tokens(prompt, target))
    }
}

impl<B: EmbeddingClient> EmbeddingClient for FaultWatch<B> {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ModelError> {
        self.note(self.inner.embed(texts))
    }
}
