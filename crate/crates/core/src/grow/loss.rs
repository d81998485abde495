//! Teacher-forcing loss of the student on teacher trajectories.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::GrowError;
use crate::client::LogprobClient;
use crate::wrapper::TrajectoryRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLoss {
    pub task_id: String,
    pub per_step_losses: Vec<f64>,
    pub mean_loss: f64,
}

/// What the student sees before acting at `step`.
pub fn student_prompt(record: &TrajectoryRecord, step: usize) -> String {
    let mut history = String::new();
    for (i, s) in record.steps[..step].iter().enumerate() {
        history.push_str(&alloc::format!("{}. {}: {}\n", i + 1, s.action, s.summary));
    }
    if history.is_empty() {
        history.push_str("None\n");
    }
    alloc::format!(
        "Task: {}\n\nPrevious actions:\n{}\nObservation:\n{}\n\nNext action:",
        record.instruction,
        history,
        record.steps[step].observation
    )
}

/// Mean over steps of the per-token negative log-likelihood the scorer assigns
/// to the teacher's action string.
pub fn teacher_forcing_loss<L: LogprobClient + ?Sized>(record: &TrajectoryRecord, scorer: &L) -> Result<TaskLoss, GrowError> {
    if record.steps.is_empty() {
        return Err(GrowError::EmptyInput("trajectory has no steps"));
    }
    let mut per_step = Vec::with_capacity(record.steps.len());
    for (t, step) in record.steps.iter().enumerate() {
        let scorer_err = |reason: String| GrowError::Scorer { task_id: record.id.clone(), reason };
        let lps = scorer.score_tokens(&student_prompt(record, t), &step.action).map_err(|e| scorer_err(alloc::format!("{e}")))?;
        if lps.is_empty() {
            return Err(scorer_err("scorer returned no tokens".into()));
        }
        if lps.iter().any(|lp| !lp.is_finite() || *lp > 0.0) {
            return Err(scorer_err("scorer returned a log-probability outside (-inf, 0]".into()));
        }
        per_step.push(-lps.iter().sum::<f64>() / lps.len() as f64);
    }
    let mean_loss = per_step.iter().sum::<f64>() / per_step.len() as f64;
    Ok(TaskLoss { task_id: record.id.clone(), per_step_losses: per_step, mean_loss })
}
