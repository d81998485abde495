//! Targeted scaling: score the student on held-out tasks, keep the ones of
//! middling difficulty, synthesize siblings of them, and train on those plus a
//! replayed slice of earlier data.
//!
//! Iteration 1 is the bootstrap: it takes an initial training slice and an
//! independent validation slice from the base pool. Every later iteration
//! draws a fresh slice of the pool, adds the variants it synthesized, and
//! holds out part of that fresh data as the next validation set.

mod loss;
mod pca;
mod select;
mod variants;

pub use loss::{student_prompt, teacher_forcing_loss, TaskLoss};
pub use pca::{effective_dimension, symmetric_eigenvalues};
pub use select::{rotate_validation, select_targets, similarity_row_sums, top_row_sums};
pub use variants::{parse_variant, synthesize_variant, VariantPlan, VariantRejected};

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatClient, EmbeddingClient, LogprobClient};
use crate::prompt::TemplateSet;
use crate::simulator::Simulator;
use crate::wrapper::TrajectoryRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrowError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid grow config: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("scoring {task_id} failed: {reason}")]
    Scorer { task_id: String, reason: String },
    #[error("embedding failed: {0}")]
    Embedder(String),
    #[error("the base pool is exhausted")]
    PoolExhausted,
}

/// Indices of the `k` instructions most similar to the rest of the set.
pub fn select_replay<E: EmbeddingClient + ?Sized>(instructions: &[String], embedder: &E, k: usize) -> Result<Vec<usize>, GrowError> {
    if k > instructions.len() {
        return Err(GrowError::TooFewRecords { needed: k, got: instructions.len() });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let m = embedder.embed(instructions).map_err(|e| GrowError::Embedder(alloc::format!("{e}")))?;
    if m.len() != instructions.len() {
        return Err(GrowError::Embedder("embedder returned the wrong number of rows".into()));
    }
    top_row_sums(&m, k)
}

/// PCA effective dimension of the instruction embeddings.
pub fn diversity_dimension<E: EmbeddingClient + ?Sized>(instructions: &[String], embedder: &E, threshold: f64) -> Result<usize, GrowError> {
    if instructions.len() < 2 {
        return Err(GrowError::TooFewRecords { needed: 2, got: instructions.len() });
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(GrowError::InvalidConfig("threshold must lie in (0, 1]".into()));
    }
    let m = embedder.embed(instructions).map_err(|e| GrowError::Embedder(alloc::format!("{e}")))?;
    Ok(effective_dimension(m.rows(), threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowConfig {
    /// Share of the base pool used as the bootstrap training set.
    pub bootstrap_fraction: f64,
    /// Share of the pool used as the bootstrap validation batch.
    pub validation_batch_fraction: f64,
    /// Share of the pool drawn as fresh data by each later iteration.
    pub fresh_fraction: f64,
    /// Replay size as a share of the previous training set.
    pub replay_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            bootstrap_fraction: 0.25,
            validation_batch_fraction: 0.08,
            fresh_fraction: 0.1,
            replay_fraction: 0.1,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl GrowConfig {
    pub fn validate(&self) -> Result<(), GrowError> {
        let unit = |v: f64, name: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(GrowError::InvalidConfig(alloc::format!("{name} must lie in (0, 1)")))
            }
        };
        unit(self.bootstrap_fraction, "bootstrap_fraction")?;
        unit(self.validation_batch_fraction, "validation_batch_fraction")?;
        unit(self.fresh_fraction, "fresh_fraction")?;
        unit(self.replay_fraction, "replay_fraction")?;
        unit(self.validation_fraction, "validation_fraction")?;
        if self.bootstrap_fraction + self.validation_batch_fraction >= 1.0 {
            return Err(GrowError::InvalidConfig("bootstrap slices exceed the pool".into()));
        }
        Ok(())
    }

    fn slice(&self, fraction: f64, pool: usize) -> usize {
        (libm::round(fraction * pool as f64) as usize).max(1)
    }
}

/// Where an iteration leaves the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub iteration: usize,
    pub train: Vec<TrajectoryRecord>,
    pub validation: Vec<TrajectoryRecord>,
    /// Number of base records drawn so far.
    pub base_cursor: usize,
    /// Ids of every record any iteration has trained on.
    pub trained_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedVariant {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationManifest {
    pub iteration: usize,
    pub target_ids: Vec<String>,
    pub variant_ids: Vec<String>,
    pub rejected_variants: Vec<RejectedVariant>,
    pub replay_ids: Vec<String>,
    pub fresh_base_ids: Vec<String>,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub loss_table: Vec<TaskLoss>,
    pub scorer_failures: Vec<String>,
    /// Base records drawn so far over the pool size.
    pub base_consumed: f64,
}

fn ids(records: &[TrajectoryRecord]) -> Vec<String> {
    records.iter().map(|r| r.id.clone()).collect()
}

/// Iteration 1: the first slices of `base` (already in draw order).
pub fn bootstrap(base: &[TrajectoryRecord], cfg: &GrowConfig) -> Result<(IterationState, IterationManifest), GrowError> {
    cfg.validate()?;
    let n = base.len();
    let n_train = cfg.slice(cfg.bootstrap_fraction, n);
    let n_val = cfg.slice(cfg.validation_batch_fraction, n);
    if n_train + n_val > n {
        return Err(GrowError::TooFewRecords { needed: n_train + n_val, got: n });
    }
    let train = base[..n_train].to_vec();
    let validation = base[n_train..n_train + n_val].to_vec();
    let manifest = IterationManifest {
        iteration: 1,
        target_ids: Vec::new(),
        variant_ids: Vec::new(),
        rejected_variants: Vec::new(),
        replay_ids: Vec::new(),
        fresh_base_ids: ids(&base[..n_train + n_val]),
        train_ids: ids(&train),
        validation_ids: ids(&validation),
        loss_table: Vec::new(),
        scorer_failures: Vec::new(),
        base_consumed: (n_train + n_val) as f64 / n as f64,
    };
    let trained_ids = train.iter().map(|r| r.id.clone()).collect();
    Ok((IterationState { iteration: 1, train, validation, base_cursor: n_train + n_val, trained_ids }, manifest))
}

/// Model roles an iteration needs.
pub struct GrowClients<'a, T: ?Sized, S: ?Sized, L: ?Sized, E: ?Sized> {
    pub teacher: &'a T,
    pub simulator: Simulator<'a, S>,
    pub scorer: &'a L,
    pub embedder: &'a E,
    pub templates: &'a TemplateSet,
}

/// One scaling iteration after `prev`.
pub fn run_iteration<T, S, L, E>(
    prev: &IterationState,
    base: &[TrajectoryRecord],
    clients: &GrowClients<'_, T, S, L, E>,
    cfg: &GrowConfig,
) -> Result<(IterationState, IterationManifest), GrowError>
where
    T: ChatClient + ?Sized,
    S: ChatClient + ?Sized,
    L: LogprobClient + ?Sized,
    E: EmbeddingClient + ?Sized,
{
    cfg.validate()?;
    if prev.validation.is_empty() {
        return Err(GrowError::EmptyInput("validation set"));
    }
    let iteration = prev.iteration + 1;

    let mut loss_table = Vec::new();
    let mut scorer_failures = Vec::new();
    for r in &prev.validation {
        match teacher_forcing_loss(r, clients.scorer) {
            Ok(l) => loss_table.push(l),
            Err(e) => {
                log::warn!("excluding {} from target selection: {e}", r.id);
                scorer_failures.push(r.id.clone());
            }
        }
    }
    if loss_table.is_empty() {
        return Err(GrowError::EmptyInput("every validation task failed to score"));
    }
    let target_ids = select_targets(&loss_table);

    let mut variants = Vec::new();
    let mut rejected_variants = Vec::new();
    for id in &target_ids {
        let original = prev.validation.iter().find(|r| &r.id == id).expect("targets come from the validation set");
        let new_id = alloc::format!("{id}~g{iteration}");
        match synthesize_variant(original, new_id, clients.teacher, clients.simulator, clients.templates) {
            Ok(v) => variants.push(v),
            Err(e) => {
                log::warn!("{e}");
                rejected_variants.push(RejectedVariant { task_id: e.task_id, reason: e.reason });
            }
        }
    }

    let n_fresh = cfg.slice(cfg.fresh_fraction, base.len());
    let end = prev.base_cursor + n_fresh;
    if end > base.len() {
        return Err(GrowError::PoolExhausted);
    }
    let fresh_base = &base[prev.base_cursor..end];
    let variant_ids = ids(&variants);
    let mut fresh: Vec<TrajectoryRecord> = variants;
    fresh.extend_from_slice(fresh_base);
    let (fresh_train, validation) = rotate_validation(iteration, fresh, cfg.validation_fraction, cfg.seed)?;

    let instructions: Vec<String> = prev.train.iter().map(|r| r.instruction.clone()).collect();
    let k = (libm::round(cfg.replay_fraction * prev.train.len() as f64) as usize).clamp(1, prev.train.len());
    let replay_idx = select_replay(&instructions, clients.embedder, k)?;
    let replay: Vec<TrajectoryRecord> = replay_idx.iter().map(|&i| prev.train[i].clone()).collect();

    let mut train = fresh_train;
    train.extend(replay.iter().cloned());
    let mut trained_ids = prev.trained_ids.clone();
    trained_ids.extend(train.iter().map(|r| r.id.clone()));

    let manifest = IterationManifest {
        iteration,
        target_ids,
        variant_ids,
        rejected_variants,
        replay_ids: ids(&replay),
        fresh_base_ids: ids(fresh_base),
        train_ids: ids(&train),
        validation_ids: ids(&validation),
        loss_table,
        scorer_failures,
        base_consumed: end as f64 / base.len() as f64,
    };
    Ok((IterationState { iteration, train, validation, base_cursor: end, trained_ids }, manifest))
}
