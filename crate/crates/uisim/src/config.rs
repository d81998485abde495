//! Run configuration: one TOML document per run, overridable from flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uisim_core::client::{GENERATION_TEMPERATURE, STUDENT_MAX_TOKENS, STUDENT_TEMPERATURE};
use uisim_core::grow::GrowConfig;
use uisim_core::prompt::TemplateSet;
use uisim_core::retrieval::RetrievalConfig;
use uisim_core::rollout::{RolloutConfig, Site};
use uisim_core::simulator::SimulationMode;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Deterministic offline responder.
    #[default]
    Scripted,
    /// OpenAI-compatible HTTP endpoint (base URL and key from the environment).
    Http,
    /// Strict replay of a recorded file; misses are errors.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Replay file. For `scripted` and `http` it is a capture target.
    pub replay: Option<PathBuf>,
    pub concurrency: usize,
    pub timeout_secs: u64,
    pub chat_model: String,
    pub scorer_model: String,
    pub embed_model: String,
    pub simulator_temperature: f32,
    pub teacher_temperature: f32,
    pub student_temperature: f32,
    pub student_max_tokens: u32,
    /// Merge the draft and structure stages into one call.
    pub fused: bool,
    pub scripted_salt: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            replay: None,
            concurrency: 4,
            timeout_secs: 120,
            chat_model: String::new(),
            scorer_model: String::new(),
            embed_model: String::new(),
            simulator_temperature: GENERATION_TEMPERATURE,
            teacher_temperature: GENERATION_TEMPERATURE,
            student_temperature: STUDENT_TEMPERATURE,
            student_max_tokens: STUDENT_MAX_TOKENS,
            fused: false,
            scripted_salt: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub rollouts: usize,
    /// Defaults to 8 on web and 10 on mobile.
    pub max_steps: Option<usize>,
    /// Defaults to the site's value.
    pub controls_per_proposal: Option<usize>,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { rollouts: 10, max_steps: None, controls_per_proposal: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrapSettings {
    pub reasoning: bool,
}

impl Default for WrapSettings {
    fn default() -> Self {
        Self { reasoning: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Site name; fixes the domain and the default control count.
    pub domain: Site,
    #[serde(default)]
    pub mode: SimulationMode,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Directory of start pages (`*.txt` trees); built-in pages otherwise.
    #[serde(default)]
    pub start_pages: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub wrap: WrapSettings,
    #[serde(default)]
    pub grow: GrowConfig,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn new(domain: Site, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            domain,
            mode: SimulationMode::RetrievalFree,
            budgets: Budgets::default(),
            template_dir: None,
            corpus: None,
            start_pages: None,
            output_dir: output_dir.into(),
            seed: 0,
            workers: 1,
            backend: BackendConfig::default(),
            retrieval: RetrievalConfig::default(),
            wrap: WrapSettings::default(),
            grow: GrowConfig::default(),
        }
    }

    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.to_owned(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.output_dir);
        for p in [&mut cfg.template_dir, &mut cfg.corpus, &mut cfg.start_pages, &mut cfg.backend.replay].into_iter().flatten() {
            fix(p);
        }
        Ok(cfg)
    }

    /// Same config with every path made absolute against the working
    /// directory, so a saved copy can be loaded from anywhere.
    pub fn absolutized(&self) -> Self {
        let mut c = self.clone();
        let abs = |p: &mut PathBuf| {
            if let Ok(a) = std::path::absolute(&*p) {
                *p = a;
            }
        };
        abs(&mut c.output_dir);
        for p in [&mut c.template_dir, &mut c.corpus, &mut c.start_pages, &mut c.backend.replay].into_iter().flatten() {
            abs(p);
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if self.mode == SimulationMode::RetrievalAugmented && self.corpus.is_none() {
            return bad("retrieval_augmented mode requires a corpus path");
        }
        if self.backend.kind == BackendKind::Replay && self.backend.replay.is_none() {
            return bad("the replay backend requires a replay file");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.budgets.rollouts == 0 {
            return bad("budgets.rollouts must be at least 1");
        }
        if self.backend.concurrency == 0 {
            return bad("backend.concurrency must be at least 1");
        }
        for (name, t) in [
            ("simulator_temperature", self.backend.simulator_temperature),
            ("teacher_temperature", self.backend.teacher_temperature),
            ("student_temperature", self.backend.student_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(ConfigError::Invalid(format!("backend.{name} must lie in [0, 2]")));
            }
        }
        if self.backend.student_max_tokens == 0 {
            return bad("backend.student_max_tokens must be at least 1");
        }
        if self.retrieval.top_k1 == 0 || self.retrieval.top_k2 == 0 {
            return bad("retrieval top_k values must be at least 1");
        }
        self.rollout_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grow_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        let mut r = RolloutConfig::for_site(self.domain);
        if let Some(m) = self.budgets.max_steps {
            r.max_steps = m;
        }
        if let Some(c) = self.budgets.controls_per_proposal {
            r.controls_per_proposal = c;
        }
        r.teacher_temperature = self.backend.teacher_temperature;
        r
    }

    /// Grow settings with the run seed.
    pub fn grow_config(&self) -> GrowConfig {
        GrowConfig { seed: self.seed, ..self.grow }
    }

    /// Built-in templates overlaid with `<template_dir>/<scope>/<name>.txt`.
    pub fn templates(&self) -> Result<TemplateSet, ConfigError> {
        let mut set = TemplateSet::builtin();
        let Some(dir) = &self.template_dir else { return Ok(set) };
        let read_dir = |p: &Path| std::fs::read_dir(p).map_err(|source| ConfigError::Read { path: p.to_owned(), source });
        let mut files = Vec::new();
        for scope in read_dir(dir)? {
            let scope = scope.map_err(|source| ConfigError::Read { path: dir.clone(), source })?.path();
            if !scope.is_dir() {
                continue;
            }
            for f in read_dir(&scope)? {
                let f = f.map_err(|source| ConfigError::Read { path: scope.clone(), source })?.path();
                if f.extension().is_some_and(|e| e == "txt") {
                    files.push(f);
                }
            }
        }
        files.sort();
        for f in files {
            let scope = f.parent().and_then(Path::file_name).and_then(|s| s.to_str()).unwrap_or_default();
            let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let text = std::fs::read_to_string(&f).map_err(|source| ConfigError::Read { path: f.clone(), source })?;
            set.insert(&format!("{scope}/{name}"), &text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", f.display())))?;
        }
        Ok(set)
    }
}
