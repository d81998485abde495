//! Subcommand bodies. Each returns the paths or numbers it produced, or a
//! [`CliError`] carrying the process exit code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use uisim_core::axtree::UiState;
use uisim_core::client::mock::fnv1a64;
use uisim_core::client::{ChatClient, ModelError};
use uisim_core::grow::{bootstrap, diversity_dimension, run_iteration, GrowClients, IterationState, RejectedVariant};
use uisim_core::retrieval::{LlmReranker, TransitionCorpus, TransitionRecord};
use uisim_core::rollout::{run_rollout, RawRollout, Teacher, TerminatedBy};
use uisim_core::scripted::seed_state;
use uisim_core::simulator::{LlmWorldModel, SimulationMode, Simulator};
use uisim_core::wrapper::{FlagKind, TrajectoryRecord, WrapConfig, WrapError, Wrapper};

use crate::backends::{Backends, BuildError};
use crate::config::{ConfigError, RunConfig};
use crate::gateway::StoreError;
use crate::io::{read_json, read_jsonl, write_json, write_jsonl, write_loss_csv, IoError, RolloutLine};

pub const ROLLOUTS_FILE: &str = "rollouts.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const REPORT_FILE: &str = "filter_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const STATE_FILE: &str = "state.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Store(s @ StoreError::Io { .. }) => CliError::Config(s.to_string()),
            BuildError::Store(s) => CliError::Data(s.to_string()),
            BuildError::Model(m) => CliError::Backend(m.to_string()),
        }
    }
}

/// A replay miss means the run left the recording: always fatal.
fn replay_guard(backends: &Backends) -> Result<(), CliError> {
    match backends.fault() {
        Some(e @ ModelError::ReplayMiss { .. }) => Err(CliError::Backend(e.to_string())),
        _ => Ok(()),
    }
}

/// Nothing was produced: blame the backend if it failed, else the data.
fn empty_output(backends: &Backends, what: &str) -> CliError {
    match backends.fault() {
        Some(e) => CliError::Backend(format!("{what}: {e}")),
        None => CliError::Data(format!("{what}: nothing was produced")),
    }
}

/// Seed of rollout `index`: SplitMix64 of the run seed offset by the index.
pub fn rollout_seed(run_seed: u64, index: usize) -> u64 {
    let mut z = run_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` over `0..n` on `workers` threads; results keep index order.
fn fan_out<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let workers = workers.clamp(1, n.max(1));
    std::thread::scope(|s| {
        for w in 0..workers {
            let (f, slots) = (&f, &slots);
            s.spawn(move || {
                for i in (w..n).step_by(workers) {
                    *slots[i].lock().expect("slot lock") = Some(f(i));
                }
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every index ran")).collect()
}

fn start_pages(cfg: &RunConfig) -> Result<Option<Vec<UiState>>, CliError> {
    let Some(dir) = &cfg.start_pages else { return Ok(None) };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("{}: no start pages (*.txt)", dir.display())));
    }
    files
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(f).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
            UiState::parse(cfg.domain.domain(), &text).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn load_corpus(cfg: &RunConfig) -> Result<Option<TransitionCorpus>, CliError> {
    if cfg.mode != SimulationMode::RetrievalAugmented {
        return Ok(None);
    }
    let path = cfg.corpus.as_ref().ok_or_else(|| CliError::Config("retrieval_augmented mode requires a corpus path".into()))?;
    let records: Vec<TransitionRecord> = read_jsonl(path)?;
    let records: Vec<TransitionRecord> = records.into_iter().filter(|r| r.domain == cfg.domain.domain()).collect();
    TransitionCorpus::new(records, cfg.retrieval).map(Some).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedItem {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub site: String,
    pub domain: String,
    pub mode: SimulationMode,
    pub controls_per_proposal: usize,
    pub max_steps: usize,
    pub requested: usize,
    pub completed: usize,
    pub failed: Vec<FailedItem>,
    /// Steps per completed rollout, in rollout order.
    pub step_counts: Vec<usize>,
    pub mean_steps: f64,
    pub terminated_by: BTreeMap<String, usize>,
}

fn terminated_name(t: TerminatedBy) -> &'static str {
    match t {
        TerminatedBy::Stop => "stop",
        TerminatedBy::Budget => "budget",
        TerminatedBy::StepFailure => "step_failure",
    }
}

/// Runs the configured number of rollouts into `cfg.output_dir`.
pub fn cmd_rollout(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let templates = cfg.templates()?;
    let backends = Backends::build(&cfg.backend)?;
    let corpus = load_corpus(cfg)?;
    let pages = start_pages(cfg)?;
    let rcfg = cfg.rollout_config();
    let site = cfg.domain;

    let teacher = Teacher::new(&*backends.teacher, &templates);
    let simulator = Simulator::new(&*backends.simulator, &templates).fused(cfg.backend.fused);
    let reranker = LlmReranker { client: &*backends.simulator, templates: &templates, domain: site.domain() };
    let world: LlmWorldModel<'_, dyn ChatClient, LlmReranker<'_, dyn ChatClient>> = match &corpus {
        Some(c) => LlmWorldModel::retrieval_augmented(simulator, c, &reranker),
        None => LlmWorldModel { simulator, retrieval: None },
    };

    let n = cfg.budgets.rollouts;
    let results = fan_out(n, cfg.workers, |i| {
        let seed = rollout_seed(cfg.seed, i);
        let initial = match &pages {
            Some(p) => p[i % p.len()].clone(),
            None => seed_state(site, i),
        };
        let id = format!("{}-{:04}", site.as_str(), i);
        let out = run_rollout(initial, &rcfg, &teacher, &world, seed);
        (id, seed, out)
    });
    replay_guard(&backends)?;

    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for (id, seed, out) in results {
        match out {
            Ok(rollout) => lines.push(RolloutLine { id, site, seed, rollout }),
            Err(e) => {
                log::warn!("rollout {id} failed: {e}");
                failed.push(FailedItem { id, error: e.to_string() });
            }
        }
    }
    if lines.is_empty() {
        return Err(empty_output(&backends, "every rollout failed"));
    }
    let step_counts: Vec<usize> = lines.iter().map(|l| l.rollout.steps.len()).collect();
    let mut terminated_by: BTreeMap<String, usize> =
        [TerminatedBy::Stop, TerminatedBy::Budget, TerminatedBy::StepFailure].iter().map(|t| (terminated_name(*t).to_owned(), 0)).collect();
    for l in &lines {
        *terminated_by.entry(terminated_name(l.rollout.terminated_by).to_owned()).or_default() += 1;
    }
    let stats = RolloutStats {
        site: site.as_str().to_owned(),
        domain: site.domain().as_str().to_owned(),
        mode: cfg.mode,
        controls_per_proposal: rcfg.controls_per_proposal,
        max_steps: rcfg.max_steps,
        requested: n,
        completed: lines.len(),
        failed,
        mean_steps: step_counts.iter().sum::<usize>() as f64 / step_counts.len() as f64,
        step_counts,
        terminated_by,
    };
    let dir = cfg.output_dir.clone();
    write_jsonl(&dir.join(ROLLOUTS_FILE), &lines)?;
    write_json(&dir.join(STATS_FILE), &stats)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.absolutized().to_toml()).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub passed: usize,
    pub failed: usize,
    /// Failed trajectories by reason.
    pub reasons: BTreeMap<String, usize>,
    /// Trajectories carrying each filter flag (a trajectory counts once per
    /// kind).
    pub flags: BTreeMap<String, usize>,
    pub failures: Vec<FailedItem>,
}

fn reason_name(e: &WrapError) -> &'static str {
    match e {
        WrapError::EmptyRollout => "empty_rollout",
        WrapError::NotStopped(_) => "not_stopped",
        WrapError::SummaryParseFailure => "summary_parse_failure",
        WrapError::CountMismatch { .. } => "count_mismatch",
        WrapError::MentionMissing { .. } => "mention_missing",
        WrapError::MentionMismatch { .. } => "mention_mismatch",
        WrapError::Filtered(_) => "filtered",
        WrapError::Template(_) => "template",
        WrapError::Teacher(_) => "teacher",
    }
}

/// Wraps `run_dir/rollouts.jsonl` into `run_dir/dataset.jsonl`. The run's
/// own `config.toml` supplies the backend unless `cfg` is given.
pub fn cmd_wrap(run_dir: &Path, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    let loaded;
    let cfg = match cfg {
        Some(c) => c,
        None => {
            loaded = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
            &loaded
        }
    };
    cfg.validate()?;
    let templates = cfg.templates()?;
    let backends = Backends::build(&cfg.backend)?;
    let lines: Vec<RolloutLine> = read_jsonl(&run_dir.join(ROLLOUTS_FILE))?;
    let wrapper = Wrapper::new(&*backends.teacher, &templates).with_config(WrapConfig { reasoning: cfg.wrap.reasoning });

    let results = fan_out(lines.len(), cfg.workers, |i| {
        let l = &lines[i];
        wrapper.wrap(&l.rollout, l.id.clone(), cfg.mode, &backends.teacher_id)
    });
    replay_guard(&backends)?;

    let mut dataset = Vec::new();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    let mut flags: BTreeMap<String, usize> = FlagKind::ALL.iter().map(|k| (k.as_str().to_owned(), 0)).collect();
    let mut failures = Vec::new();
    for (line, r) in lines.iter().zip(results) {
        match r {
            Ok(rec) => dataset.push(rec),
            Err(e) => {
                *reasons.entry(reason_name(&e).to_owned()).or_default() += 1;
                match &e {
                    WrapError::Filtered(fl) => {
                        let mut kinds: Vec<&str> = fl.iter().map(|f| f.kind.as_str()).collect();
                        kinds.sort_unstable();
                        kinds.dedup();
                        for k in kinds {
                            *flags.entry(k.to_owned()).or_default() += 1;
                        }
                    }
                    WrapError::MentionMissing { .. } => *flags.entry(FlagKind::MentionMissing.as_str().to_owned()).or_default() += 1,
                    WrapError::MentionMismatch { .. } => *flags.entry(FlagKind::MentionMismatch.as_str().to_owned()).or_default() += 1,
                    _ => {}
                }
                failures.push(FailedItem { id: line.id.clone(), error: e.to_string() });
            }
        }
    }
    let report = FilterReport {
        input: lines.len(),
        passed: dataset.len(),
        failed: failures.len(),
        reasons,
        flags,
        failures,
    };
    let path = run_dir.join(DATASET_FILE);
    write_jsonl(&path, &dataset)?;
    write_json(&run_dir.join(REPORT_FILE), &report)?;
    Ok(path)
}

/// `grow_dir/iter-007`.
pub fn iteration_dir(grow_dir: &Path, iteration: usize) -> PathBuf {
    grow_dir.join(format!("iter-{iteration:03}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowManifest {
    pub iteration: usize,
    pub target_ids: Vec<String>,
    pub variant_ids: Vec<String>,
    pub replay_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    /// Loss table of the validation set scored this iteration, relative to
    /// the manifest.
    pub loss_table: String,
    pub train_file: String,
    pub train_ids: Vec<String>,
    pub fresh_base_ids: Vec<String>,
    pub rejected_variants: Vec<RejectedVariant>,
    pub scorer_failures: Vec<String>,
    pub base_consumed: f64,
}

/// Base pool in seeded draw order.
pub fn load_base(paths: &[PathBuf], seed: u64) -> Result<Vec<TrajectoryRecord>, CliError> {
    let mut base: Vec<TrajectoryRecord> = Vec::new();
    for p in paths {
        base.extend(read_jsonl::<TrajectoryRecord>(p)?);
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = base.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(CliError::Data(format!("duplicate trajectory id {}", dup.id)));
    }
    let key = |r: &TrajectoryRecord| {
        let mut bytes = seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(r.id.as_bytes());
        (fnv1a64(&bytes), r.id.clone())
    };
    base.sort_by_cached_key(key);
    Ok(base)
}

/// Runs grow iteration `iteration` into `grow_dir/iter-NNN`. Iterations
/// after the first need the previous iteration's directory.
pub fn cmd_grow(cfg: &RunConfig, base_paths: &[PathBuf], grow_dir: &Path, iteration: usize) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    if iteration == 0 {
        return Err(CliError::Config("iterations are numbered from 1".into()));
    }
    let gcfg = cfg.grow_config();
    let base = load_base(base_paths, cfg.seed)?;
    let dir = iteration_dir(grow_dir, iteration);
    let (state, manifest, backends) = if iteration == 1 {
        let (s, m) = bootstrap(&base, &gcfg).map_err(|e| CliError::Data(e.to_string()))?;
        (s, m, None)
    } else {
        let prev_path = iteration_dir(grow_dir, iteration - 1).join(STATE_FILE);
        if !prev_path.exists() {
            return Err(CliError::Data(format!("missing artifact {} (run iteration {} first)", prev_path.display(), iteration - 1)));
        }
        let prev: IterationState = read_json(&prev_path)?;
        if prev.iteration != iteration - 1 {
            return Err(CliError::Data(format!("{} holds iteration {}", prev_path.display(), prev.iteration)));
        }
        let templates = cfg.templates()?;
        let backends = Backends::build(&cfg.backend)?;
        let clients = GrowClients {
            teacher: &*backends.teacher,
            simulator: Simulator::new(&*backends.simulator, &templates).fused(cfg.backend.fused),
            scorer: &*backends.scorer,
            embedder: &*backends.embedder,
            templates: &templates,
        };
        let out = run_iteration(&prev, &base, &clients, &gcfg);
        replay_guard(&backends)?;
        let (s, m) = out.map_err(|e| match backends.fault() {
            Some(f) => CliError::Backend(format!("{e} ({f})")),
            None => CliError::Data(e.to_string()),
        })?;
        (s, m, Some(backends))
    };
    drop(backends);

    let by_id: BTreeMap<&str, &TrajectoryRecord> = state.train.iter().map(|r| (r.id.as_str(), r)).collect();
    let train: Vec<&TrajectoryRecord> = manifest.train_ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect();
    write_jsonl(&dir.join(TRAIN_FILE), &train)?;
    write_jsonl(&dir.join(VALIDATION_FILE), &state.validation)?;
    write_loss_csv(&dir.join(LOSS_FILE), &manifest.loss_table)?;
    write_json(&dir.join(STATE_FILE), &state)?;
    let out = GrowManifest {
        iteration: manifest.iteration,
        target_ids: manifest.target_ids,
        variant_ids: manifest.variant_ids,
        replay_ids: manifest.replay_ids,
        validation_ids: manifest.validation_ids,
        loss_table: LOSS_FILE.to_owned(),
        train_file: TRAIN_FILE.to_owned(),
        train_ids: manifest.train_ids,
        fresh_base_ids: manifest.fresh_base_ids,
        rejected_variants: manifest.rejected_variants,
        scorer_failures: manifest.scorer_failures,
        base_consumed: manifest.base_consumed,
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &out)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub records: usize,
    pub threshold: f64,
    pub effective_dimension: usize,
}

/// PCA effective dimension of the instructions in `datasets`.
pub fn cmd_diversity(cfg: &RunConfig, datasets: &[PathBuf], threshold: f64) -> Result<DiversityReport, CliError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::Config("threshold must lie in (0, 1]".into()));
    }
    let backends = Backends::build(&cfg.backend)?;
    let mut instructions = Vec::new();
    for p in datasets {
        instructions.extend(read_jsonl::<TrajectoryRecord>(p)?.into_iter().map(|r| r.instruction));
    }
    let dim = diversity_dimension(&instructions, &*backends.embedder, threshold).map_err(|e| match backends.fault() {
        Some(f) => CliError::Backend(f.to_string()),
        None => CliError::Data(e.to_string()),
    })?;
    Ok(DiversityReport { records: instructions.len(), threshold, effective_dimension: dim })
}

/// Transition records from raw rollouts: one per non-stop step, with the
/// history up to and including that step.
pub fn corpus_from_rollouts(lines: &[RolloutLine]) -> Vec<TransitionRecord> {
    let mut out = Vec::new();
    for l in lines {
        let r: &RawRollout = &l.rollout;
        let full = r.history();
        for (i, step) in r.steps.iter().enumerate() {
            if step.action.is_stop() {
                continue;
            }
            let mut history = uisim_core::actions::ActionHistory::new();
            for h in &full.steps()[..=i] {
                history.push(h.thought.clone(), h.action.clone(), h.summary.clone());
            }
            out.push(TransitionRecord {
                obs_before: step.observation.rendered_text.clone(),
                history,
                obs_after: r.observation_after(i).rendered_text.clone(),
                state_before: step.state.clone(),
                state_after: r.state_after(i).clone(),
                domain: r.domain,
            });
        }
    }
    out
}

/// Writes a transition corpus built from the rollouts of `run_dirs`.
pub fn cmd_build_corpus(run_dirs: &[PathBuf], out: &Path) -> Result<usize, CliError> {
    let mut records = Vec::new();
    for d in run_dirs {
        records.extend(corpus_from_rollouts(&read_jsonl(&d.join(ROLLOUTS_FILE))?));
    }
    if records.is_empty() {
        return Err(CliError::Data("no transitions found".into()));
    }
    write_jsonl(out, &records)?;
    Ok(records.len())
}
