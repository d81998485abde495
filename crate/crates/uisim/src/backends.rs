//! Assembles the model roles a command needs from its [`BackendConfig`].

use std::sync::{Arc, Mutex};
use std::time::Duration;

use uisim_core::client::mock::{HashedLogprob, NgramEmbedder};
use uisim_core::client::{ChatClient, ChatParams, EmbeddingClient, LogprobClient, ModelError};
use uisim_core::scripted::ScriptedLlm;

use crate::config::{BackendConfig, BackendKind};
use crate::gateway::{FaultWatch, HttpBackend, Limited, Limiter, Replay, ReplayStore, Retry, StoreError};

type ScorerBox = Box<dyn LogprobClient>;
type EmbedderBox = Box<dyn EmbeddingClient>;

pub type Fault = Arc<Mutex<Option<ModelError>>>;

/// Simulator, teacher, scorer and embedder roles.
pub struct Backends {
    pub simulator: Box<dyn ChatClient>,
    pub teacher: Box<dyn ChatClient>,
    pub scorer: Box<dyn LogprobClient>,
    pub embedder: Box<dyn EmbeddingClient>,
    /// Name recorded in trajectory provenance.
    pub teacher_id: String,
    fault: Fault,
    store: Option<Arc<ReplayStore>>,
}

impl Backends {
    pub fn build(cfg: &BackendConfig) -> Result<Self, BuildError> {
        let fault: Fault = Arc::default();
        let store = match (&cfg.replay, cfg.kind) {
            (Some(p), BackendKind::Replay) => Some(Arc::new(ReplayStore::load(p)?)),
            (Some(p), _) => Some(Arc::new(ReplayStore::capture(p)?)),
            (None, _) => None,
        };
        let limiter = Limiter::new(cfg.concurrency);
        let timeout = Duration::from_secs(cfg.timeout_secs);

        let chat = |role: &str, temperature: f32, max_tokens: u32| -> Result<Box<dyn ChatClient>, BuildError> {
            let base: Option<Box<dyn ChatClient>> = match cfg.kind {
                BackendKind::Scripted => Some(Box::new(ScriptedLlm::new(cfg.scripted_salt))),
                BackendKind::Http => {
                    let params = ChatParams::new(temperature, max_tokens)?;
                    let http = HttpBackend::from_env(&cfg.chat_model, params, timeout)?;
                    Some(Box::new(Retry::new(Limited::new(http, limiter.clone()))))
                }
                BackendKind::Replay => None,
            };
            Ok(wrap_chat(base, store.clone(), role, fault.clone()))
        };
        let simulator = chat("simulator", cfg.simulator_temperature, uisim_core::client::STAGE_MAX_TOKENS)?;
        let teacher = chat("teacher", cfg.teacher_temperature, uisim_core::client::STAGE_MAX_TOKENS)?;

        let (scorer_base, embed_base): (Option<ScorerBox>, Option<EmbedderBox>) = match cfg.kind {
            BackendKind::Scripted => (Some(Box::new(HashedLogprob::default())), Some(Box::new(NgramEmbedder::default()))),
            BackendKind::Http => {
                let student = ChatParams::new(cfg.student_temperature, cfg.student_max_tokens)?;
                let scorer = HttpBackend::from_env(&cfg.scorer_model, student, timeout)?;
                let embed = HttpBackend::from_env(&cfg.embed_model, student, timeout)?;
                (
                    Some(Box::new(Retry::new(Limited::new(scorer, limiter.clone())))),
                    Some(Box::new(Retry::new(Limited::new(embed, limiter.clone())))),
                )
            }
            BackendKind::Replay => (None, None),
        };
        let scorer: Box<dyn LogprobClient> = match (&store, scorer_base) {
            (Some(s), Some(b)) => Box::new(FaultWatch::new(Replay::capture(s.clone(), "scorer", b), fault.clone())),
            (Some(s), None) => Box::new(FaultWatch::new(Replay::<Box<dyn LogprobClient>>::strict(s.clone(), "scorer"), fault.clone())),
            (None, Some(b)) => Box::new(FaultWatch::new(b, fault.clone())),
            (None, None) => unreachable!("replay backends always have a store"),
        };
        let embedder: Box<dyn EmbeddingClient> = match (&store, embed_base) {
            (Some(s), Some(b)) => Box::new(FaultWatch::new(Replay::capture(s.clone(), "embedder", b), fault.clone())),
            (Some(s), None) => Box::new(FaultWatch::new(Replay::<Box<dyn EmbeddingClient>>::strict(s.clone(), "embedder"), fault.clone())),
            (None, Some(b)) => Box::new(FaultWatch::new(b, fault.clone())),
            (None, None) => unreachable!("replay backends always have a store"),
        };
        let teacher_id = match cfg.kind {
            BackendKind::Scripted => format!("scripted:{}", cfg.scripted_salt),
            BackendKind::Http | BackendKind::Replay if !cfg.chat_model.is_empty() => cfg.chat_model.clone(),
            BackendKind::Http => "http".to_owned(),
            BackendKind::Replay => "replay".to_owned(),
        };
        Ok(Self { simulator, teacher, scorer, embedder, teacher_id, fault, store })
    }

    /// First model error any role returned, if one did.
    pub fn fault(&self) -> Option<ModelError> {
        self.fault.lock().expect("fault lock").clone()
    }

    pub fn replay_entries(&self) -> Option<usize> {
        self.store.as_ref().map(|s| s.len())
    }
}

fn wrap_chat(base: Option<Box<dyn ChatClient>>, store: Option<Arc<ReplayStore>>, role: &str, fault: Fault) -> Box<dyn ChatClient> {
    match (store, base) {
        (Some(s), Some(b)) => Box::new(FaultWatch::new(Replay::capture(s, role, b), fault)),
        (Some(s), None) => Box::new(FaultWatch::new(Replay::<Box<dyn ChatClient>>::strict(s, role), fault)),
        (None, Some(b)) => Box::new(FaultWatch::new(b, fault)),
        (None, None) => unreachable!("replay backends always have a store"),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
