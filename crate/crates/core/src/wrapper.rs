//! Turns raw rollouts into training trajectories.
//!
//! The pipeline summarizes the rollout into an instruction, optionally turns an
//! information-rich final page into a question with a terminal answer, rewrites
//! every thought so it reasons toward the instruction, and finally runs the
//! quality filter. Records that fail any stage are dropped whole.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{extract_action_mention, parse_action, render_action, Action, ActionHistory};
use crate::axtree::{Domain, UiState};
use crate::client::ChatClient;
use crate::prompt::{names, sections, yes_no, TemplateSet};
use crate::rollout::{RawRollout, TerminatedBy};
use crate::simulator::SimulationMode;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WrapError {
    #[error("rollout has no steps")]
    EmptyRollout,
    #[error("rollout ended by {0:?}; only rollouts that stopped are wrapped")]
    NotStopped(TerminatedBy),
    #[error("no task summary could be parsed")]
    SummaryParseFailure,
    #[error("rewrite returned {got} thoughts for {expected} steps")]
    CountMismatch { expected: usize, got: usize },
    #[error("rewritten thought {step} does not mention its action")]
    MentionMissing { step: usize },
    #[error("rewritten thought {step} mentions `{mentioned}` instead of its action")]
    MentionMismatch { step: usize, mentioned: String },
    #[error("record rejected by the quality filter: {0:?}")]
    Filtered(Vec<FilterFlag>),
    #[error("template error: {0}")]
    Template(String),
    #[error("teacher call failed: {0}")]
    Teacher(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub observation: String,
    pub thought: String,
    pub action: String,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    UnparsableAction,
    InvalidTarget,
    NoStateChange,
    MentionMissing,
    MentionMismatch,
}

impl FlagKind {
    pub const ALL: [FlagKind; 5] = [
        FlagKind::UnparsableAction,
        FlagKind::InvalidTarget,
        FlagKind::NoStateChange,
        FlagKind::MentionMissing,
        FlagKind::MentionMismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::UnparsableAction => "unparsable_action",
            FlagKind::InvalidTarget => "invalid_target",
            FlagKind::NoStateChange => "no_state_change",
            FlagKind::MentionMissing => "mention_missing",
            FlagKind::MentionMismatch => "mention_mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FilterFlag {
    pub step: usize,
    pub kind: FlagKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: SimulationMode,
    pub teacher_id: String,
    pub control_trace: Vec<String>,
    #[serde(default)]
    pub filter_flags: Vec<FilterFlag>,
}

/// Full state and visible text at one point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub state: UiState,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub schema_version: String,
    pub instruction: String,
    pub domain: Domain,
    pub steps: Vec<TrajectoryStep>,
    pub provenance: Provenance,
    /// One point per step plus the point after the last step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TracePoint>,
}

impl TrajectoryRecord {
    pub fn actions(&self) -> Result<Vec<Action>, crate::actions::ActionParseError> {
        self.steps.iter().map(|s| parse_action(&s.action, self.domain)).collect()
    }

    /// Verb of every step, in order.
    pub fn verb_sequence(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.action.split([' ', '[']).next().unwrap_or("")).collect()
    }

    pub fn history(&self) -> ActionHistory {
        let mut h = ActionHistory::new();
        for s in &self.steps {
            if let Ok(a) = parse_action(&s.action, self.domain) {
                h.push(s.thought.clone(), a, s.summary.clone());
            }
        }
        h
    }
}

/// Question that replaces the instruction and the answer its final stop carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningInsertion {
    pub question: String,
    pub answer: String,
    /// Index of the answering stop step.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapConfig {
    pub reasoning: bool,
}

impl Default for WrapConfig {
    fn default() -> Self {
        Self { reasoning: true }
    }
}

/// Pass/fail verdict with every violated criterion.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Verdict {
    pub flags: Vec<FilterFlag>,
}

impl Verdict {
    pub fn pass(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Checks that every non-stop action targets an element listed in its
/// step's observation text and changes the page, and that every thought ends
/// by naming the recorded action. `trace` must hold one point per step plus a final one.
///
/// Scrolls keep the state, so for them the change is read from the
/// observation text.
pub fn quality_filter(record: &TrajectoryRecord, trace: &[TracePoint]) -> Verdict {
    assert_eq!(trace.len(), record.steps.len() + 1, "trace must hold one point per step plus the final one");
    let mut flags = Vec::new();
    let mut flag = |step, kind| flags.push(FilterFlag { step, kind });
    for (i, step) in record.steps.iter().enumerate() {
        let Ok(action) = parse_action(&step.action, record.domain) else {
            flag(i, FlagKind::UnparsableAction);
            continue;
        };
        if !action.is_stop() {
            let before = &trace[i];
            let after = &trace[i + 1];
            if let Some(id) = action.target() {
                if !observation_mentions(&before.observation, id) {
                    flag(i, FlagKind::InvalidTarget);
                }
            }
            let changed = match action {
                Action::Scroll { .. } => before.observation != after.observation,
                _ => before.state != after.state || before.observation != after.observation,
            };
            if !changed {
                flag(i, FlagKind::NoStateChange);
            }
        }
        match extract_action_mention(&step.thought) {
            None => flag(i, FlagKind::MentionMissing),
            Some(m) => match parse_action(&m, record.domain) {
                Ok(mentioned) if mentioned == action => {}
                _ => flag(i, FlagKind::MentionMismatch),
            },
        }
    }
    Verdict { flags }
}

fn observation_mentions(observation: &str, id: crate::axtree::ElementId) -> bool {
    let web = alloc::format!("[{}]", id.0);
    let mobile = alloc::format!("Element {}:", id.0);
    observation.lines().any(|l| {
        let l = l.trim_start();
        l.starts_with(&web) || l.starts_with(&mobile)
    })
}

/// Chat-backed wrapper stages.
pub struct Wrapper<'a, C: ?Sized> {
    pub client: &'a C,
    pub templates: &'a TemplateSet,
    pub config: WrapConfig,
}

fn steps_text(rollout_steps: &[(String, Action, String)]) -> String {
    let mut out = String::new();
    for (i, (thought, action, summary)) in rollout_steps.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&alloc::format!(
            "Step {}:\nThought: {}\nAction: {}\nSummary: {}",
            i + 1,
            thought.trim(),
            render_action(action),
            summary.trim()
        ));
    }
    out
}

/// Parses `Thought N:` lines; continuation lines join the thought above.
pub fn parse_rewritten(reply: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    for line in reply.lines() {
        let t = line.trim().trim_start_matches("**");
        let head = t
            .strip_prefix("Thought ")
            .and_then(|rest| {
                let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
                let tail = rest[digits.len()..].strip_prefix(':')?.trim_start_matches("**");
                Some((digits.parse::<usize>().ok()?, tail.trim().to_string()))
            });
        match head {
            Some(h) => out.push(h),
            None => {
                if let Some(last) = out.last_mut() {
                    if !t.is_empty() {
                        last.1.push(' ');
                        last.1.push_str(t);
                    }
                }
            }
        }
    }
    out
}

impl<'a, C: ChatClient + ?Sized> Wrapper<'a, C> {
    pub fn new(client: &'a C, templates: &'a TemplateSet) -> Self {
        Self { client, templates, config: WrapConfig::default() }
    }

    pub fn with_config(mut self, config: WrapConfig) -> Self {
        self.config = config;
        self
    }

    fn ask(&self, domain: Domain, name: &str, slots: &[(&str, &str)], note: Option<&str>) -> Result<String, WrapError> {
        let mut prompt = self.templates.render(domain, name, slots).map_err(|e| WrapError::Template(e.to_string()))?;
        if let Some(n) = note {
            prompt.user.push_str(n);
        }
        self.client.complete(&prompt).map_err(|e| WrapError::Teacher(e.to_string()))
    }

    /// One-sentence instruction describing what the rollout did.
    pub fn summarize_task(&self, rollout: &RawRollout) -> Result<String, WrapError> {
        if rollout.steps.is_empty() {
            return Err(WrapError::EmptyRollout);
        }
        let h = rollout.history().render();
        for attempt in 0..2 {
            let note = (attempt > 0).then_some("\n(The previous reply had no `Task:` line. Reply with one.)");
            let reply = self.ask(rollout.domain, names::SUMMARIZE, &[("steps", &h)], note)?;
            if let Some(task) = sections(&reply, &["Thought", "Task"]).get("Task").filter(|t| !t.is_empty()) {
                return Ok(task.lines().next().unwrap_or("").trim().to_string());
            }
        }
        Err(WrapError::SummaryParseFailure)
    }

    /// Asks whether the final page supports a factual question. Any parse
    /// problem counts as "no".
    pub fn insert_reasoning(&self, rollout: &RawRollout) -> Option<ReasoningInsertion> {
        if rollout.steps.is_empty() {
            return None;
        }
        let h = rollout.history().render();
        let reply = match self.ask(
            rollout.domain,
            names::REASONING,
            &[("history", &h), ("observation", &rollout.final_observation.rendered_text)],
            None,
        ) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("reasoning insertion skipped: {e}");
                return None;
            }
        };
        let secs = sections(&reply, &["Thought", "Answer", "Question", "Solution"]);
        if !secs.get("Answer").and_then(|a| yes_no(a))? {
            return None;
        }
        let question = secs.get("Question").filter(|q| !q.is_empty())?.clone();
        let answer = secs.get("Solution").filter(|s| !s.is_empty())?.clone();
        let last_plain_stop = rollout.steps.last().is_some_and(|s| matches!(s.action, Action::Stop { answer: None }));
        let index = if last_plain_stop { rollout.steps.len() - 1 } else { rollout.steps.len() };
        Some(ReasoningInsertion { question, answer, index })
    }

    /// One rewritten thought per step, each naming that step's action.
    pub fn rewrite_thoughts(
        &self,
        domain: Domain,
        steps: &[(String, Action, String)],
        instruction: &str,
    ) -> Result<Vec<String>, WrapError> {
        if steps.is_empty() {
            return Ok(Vec::new());
        }
        let text = steps_text(steps);
        let reply = self.ask(domain, names::REWRITE, &[("instruction", instruction), ("steps", &text)], None)?;
        let parsed = parse_rewritten(&reply);
        let in_order = parsed.iter().enumerate().all(|(i, (n, _))| *n == i + 1);
        if parsed.len() != steps.len() || !in_order {
            return Err(WrapError::CountMismatch { expected: steps.len(), got: parsed.len() });
        }
        let mut out = Vec::with_capacity(steps.len());
        for (i, ((_, thought), (_, action, _))) in parsed.into_iter().zip(steps).enumerate() {
            match extract_action_mention(&thought) {
                None => return Err(WrapError::MentionMissing { step: i }),
                Some(m) => {
                    if parse_action(&m, domain).ok().as_ref() != Some(action) {
                        return Err(WrapError::MentionMismatch { step: i, mentioned: m });
                    }
                }
            }
            out.push(thought);
        }
        Ok(out)
    }

    /// Runs every stage and returns a record that passed the filter.
    pub fn wrap(
        &self,
        rollout: &RawRollout,
        id: impl Into<String>,
        mode: SimulationMode,
        teacher_id: &str,
    ) -> Result<TrajectoryRecord, WrapError> {
        if rollout.steps.is_empty() {
            return Err(WrapError::EmptyRollout);
        }
        if rollout.terminated_by != TerminatedBy::Stop {
            return Err(WrapError::NotStopped(rollout.terminated_by));
        }
        let mut instruction = self.summarize_task(rollout)?;

        let mut steps: Vec<(String, Action, String)> =
            rollout.steps.iter().map(|s| (s.thought.clone(), s.action.clone(), s.summary.clone())).collect();
        let mut trace: Vec<TracePoint> = rollout
            .steps
            .iter()
            .map(|s| TracePoint { state: s.state.clone(), observation: s.observation.rendered_text.clone() })
            .collect();
        trace.push(TracePoint {
            state: rollout.final_state.clone(),
            observation: rollout.final_observation.rendered_text.clone(),
        });

        if self.config.reasoning {
            if let Some(r) = self.insert_reasoning(rollout) {
                let stop = Action::Stop { answer: Some(r.answer.clone()) };
                let thought = alloc::format!("The page answers the question: {}", r.answer);
                let summary = alloc::format!("Answer the question: {}", r.question);
                if r.index < steps.len() {
                    steps[r.index] = (thought, stop, summary);
                } else {
                    steps.push((thought, stop, summary));
                    trace.push(trace.last().expect("trace is nonempty").clone());
                }
                instruction = r.question;
            }
        }

        let thoughts = self.rewrite_thoughts(rollout.domain, &steps, &instruction)?;
        let record_steps = steps
            .iter()
            .zip(thoughts)
            .enumerate()
            .map(|(i, ((_, action, summary), thought))| TrajectoryStep {
                observation: trace[i].observation.clone(),
                thought,
                action: render_action(action),
                summary: summary.clone(),
            })
            .collect();
        let mut record = TrajectoryRecord {
            id: id.into(),
            schema_version: SCHEMA_VERSION.to_string(),
            instruction,
            domain: rollout.domain,
            steps: record_steps,
            provenance: Provenance {
                mode,
                teacher_id: teacher_id.to_string(),
                control_trace: rollout.controls.iter().map(|c| c.control.text.clone()).collect(),
                filter_flags: Vec::new(),
            },
            trace,
        };
        let verdict = quality_filter(&record, &record.trace);
        if !verdict.pass() {
            record.provenance.filter_flags = verdict.flags.clone();
            return Err(WrapError::Filtered(verdict.flags));
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axtree::{parse_web_tree, ElementId};

    fn point(tree: &str, obs: &str) -> TracePoint {
        TracePoint { state: parse_web_tree(tree).unwrap(), observation: obs.to_string() }
    }

    fn record(steps: &[(&str, &str)]) -> TrajectoryRecord {
        TrajectoryRecord {
            id: "t".into(),
            schema_version: SCHEMA_VERSION.into(),
            instruction: "Do it".into(),
            domain: Domain::Web,
            steps: steps
                .iter()
                .map(|(thought, action)| TrajectoryStep {
                    observation: String::new(),
                    thought: thought.to_string(),
                    action: action.to_string(),
                    summary: String::new(),
                })
                .collect(),
            provenance: Provenance {
                mode: SimulationMode::RetrievalFree,
                teacher_id: "t".into(),
                control_trace: Vec::new(),
                filter_flags: Vec::new(),
            },
            trace: Vec::new(),
        }
    }

    struct Canned(&'static str);

    impl crate::client::ChatClient for Canned {
        fn complete(&self, _: &crate::client::Prompt) -> Result<String, crate::client::ModelError> {
            Ok(self.0.into())
        }
    }

    fn two_steps() -> Vec<(String, Action, String)> {
        alloc::vec![
            ("look".into(), Action::Click { id: ElementId(3706) }, "opened".into()),
            ("done".into(), Action::Stop { answer: None }, String::new()),
        ]
    }

    fn rewrite(reply: &'static str) -> Result<Vec<String>, WrapError> {
        let templates = TemplateSet::builtin();
        Wrapper::new(&Canned(reply), &templates).rewrite_thoughts(Domain::Web, &two_steps(), "Open the report")
    }

    #[test]
    fn rewrite_keeps_one_thought_per_step() {
        let got = rewrite(
            "Thought 1: The report link is visible, so the next action I will perform is click [3706]\n\
             Thought 2: The report is open, so the next action I will perform is stop",
        )
        .unwrap();
        assert_eq!(got.len(), 2);
        assert!(got[0].ends_with("next action I will perform is click [3706]"));
    }

    #[test]
    fn rewrite_rejects_missing_and_wrong_mentions() {
        let missing = rewrite("Thought 1: I open the report.\nThought 2: the next action I will perform is stop");
        assert!(matches!(missing, Err(WrapError::MentionMissing { step: 0 })));
        let wrong = rewrite("Thought 1: the next action I will perform is click [7]\nThought 2: the next action I will perform is stop");
        assert!(matches!(wrong, Err(WrapError::MentionMismatch { step: 0, .. })));
        let short = rewrite("Thought 1: the next action I will perform is click [3706]");
        assert!(matches!(short, Err(WrapError::CountMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn mismatch_and_no_change() {
        let a = point("[1] RootWebArea 'a'\n\t[7] link 'x'\n\t[9] link 'y'", "[1] RootWebArea 'a'\n[7] link 'x'\n[9] link 'y'");
        let r = record(&[("so the next action I will perform is click [7]", "click [9]")]);
        let v = quality_filter(&r, &[a.clone(), a]);
        assert_eq!(
            v.flags,
            [FilterFlag { step: 0, kind: FlagKind::NoStateChange }, FilterFlag { step: 0, kind: FlagKind::MentionMismatch }]
        );
    }

    #[test]
    fn scroll_judged_by_observation() {
        let a = point("[1] RootWebArea 'a'", "top");
        let b = point("[1] RootWebArea 'a'", "lower");
        let r = record(&[("the next action I will perform is scroll [down]", "scroll [down]")]);
        assert!(quality_filter(&r, &[a.clone(), b]).pass());
        assert_eq!(quality_filter(&r, &[a.clone(), a]).flags[0].kind, FlagKind::NoStateChange);
    }

    #[test]
    fn mention_compares_canonical_forms() {
        let a = point("[1] RootWebArea 'a'\n\t[4] textbox 'q'", "[4] textbox 'q'");
        let b = point("[1] RootWebArea 'b'", "[1] RootWebArea 'b'");
        let r = record(&[("the next action I will perform is type  [4] [shoes]  [1].", "type [4] [shoes] [1]")]);
        assert!(quality_filter(&r, &[a, b]).pass());
    }

    #[test]
    fn rewritten_parsing() {
        let p = parse_rewritten("Thought 1: a\ncontinued\n**Thought 2:** b\n");
        assert_eq!(p, [(1, "a continued".to_string()), (2, "b".to_string())]);
        assert!(observation_mentions("  [12] link 'x'", ElementId(12)));
        assert!(!observation_mentions("[123] link 'x'", ElementId(12)));
    }
}
