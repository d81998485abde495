//! Instruction-free rollout guided by step-wise task controls.
//!
//! A teacher model proposes a few short directions for the current state, one
//! is drawn at random, and the teacher acts toward it until it judges the
//! direction done; then new directions are proposed from wherever the session
//! has arrived. The run ends on `stop`, on the step budget, or when the world
//! model cannot produce a next state.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{parse_action, render_action, Action, ActionHistory};
use crate::axtree::{Domain, Observation, UiState};
use crate::client::{ChatClient, Prompt};
use crate::prompt::{list_items, names, sections, yes_no, TemplateSet};
use crate::transition::{BrowsingSession, TransitionError, WorldModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RolloutError {
    #[error("no task controls could be parsed from the teacher reply")]
    NoControlsParsed,
    #[error("step generation failed: {0}")]
    StepGeneration(String),
    #[error("invalid rollout config: {0}")]
    Config(String),
    #[error("the initial observation is empty")]
    EmptyObservation,
    #[error("template error: {0}")]
    Template(String),
    #[error("teacher call failed: {0}")]
    Teacher(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskControl {
    pub text: String,
    pub proposed_at_step: usize,
    pub done: bool,
}

/// A proposal round: the drawn control and the ones left unused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub control: TaskControl,
    pub alternatives: Vec<String>,
}

/// Site families with their per-proposal control counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    Shopping,
    Gitlab,
    Map,
    Reddit,
    ShoppingAdmin,
    Android,
}

impl Site {
    pub const ALL: [Site; 6] = [Site::Shopping, Site::Gitlab, Site::Map, Site::Reddit, Site::ShoppingAdmin, Site::Android];

    pub fn controls_per_proposal(self) -> usize {
        match self {
            Site::Shopping => 5,
            Site::Gitlab => 8,
            Site::Map => 3,
            Site::Reddit => 6,
            Site::ShoppingAdmin => 8,
            Site::Android => 5,
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Site::Android => Domain::Mobile,
            _ => Domain::Web,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Site::Shopping => "shopping",
            Site::Gitlab => "gitlab",
            Site::Map => "map",
            Site::Reddit => "reddit",
            Site::ShoppingAdmin => "shopping_admin",
            Site::Android => "android",
        }
    }
}

impl core::str::FromStr for Site {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Site::ALL
            .into_iter()
            .find(|site| site.as_str() == s)
            .ok_or_else(|| alloc::format!("unknown site `{s}`"))
    }
}

pub const DEFAULT_WEB_MAX_STEPS: usize = 8;
pub const DEFAULT_MOBILE_MAX_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub domain: Domain,
    pub max_steps: usize,
    pub controls_per_proposal: usize,
    pub teacher_temperature: f32,
}

impl RolloutConfig {
    pub fn for_site(site: Site) -> Self {
        let domain = site.domain();
        Self {
            domain,
            max_steps: match domain {
                Domain::Web => DEFAULT_WEB_MAX_STEPS,
                Domain::Mobile => DEFAULT_MOBILE_MAX_STEPS,
            },
            controls_per_proposal: site.controls_per_proposal(),
            teacher_temperature: crate::client::GENERATION_TEMPERATURE,
        }
    }

    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.max_steps == 0 {
            return Err(RolloutError::Config("max_steps must be at least 1".into()));
        }
        if self.controls_per_proposal == 0 {
            return Err(RolloutError::Config("controls_per_proposal must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.teacher_temperature) {
            return Err(RolloutError::Config("teacher_temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    Stop,
    Budget,
    StepFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawStep {
    /// Full state the action was taken in.
    pub state: UiState,
    pub observation: Observation,
    pub thought: String,
    pub action: Action,
    pub summary: String,
    /// Index into [`RawRollout::controls`].
    pub control: usize,
    /// Present when the world model produced the next state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRollout {
    pub domain: Domain,
    pub steps: Vec<RawStep>,
    /// State and observation after the last step.
    pub final_state: UiState,
    pub final_observation: Observation,
    pub controls: Vec<ControlRecord>,
    pub key_info: String,
    pub terminated_by: TerminatedBy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RawRollout {
    /// State after step `i`.
    pub fn state_after(&self, i: usize) -> &UiState {
        self.steps.get(i + 1).map_or(&self.final_state, |s| &s.state)
    }

    pub fn observation_after(&self, i: usize) -> &Observation {
        self.steps.get(i + 1).map_or(&self.final_observation, |s| &s.observation)
    }

    pub fn history(&self) -> ActionHistory {
        let mut h = ActionHistory::new();
        for s in &self.steps {
            h.push(s.thought.clone(), s.action.clone(), s.summary.clone());
        }
        h
    }
}

/// Thought, action and one-line summary for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepProposal {
    pub thought: String,
    pub action: Action,
    pub summary: String,
}

/// Chat-backed teacher.
pub struct Teacher<'a, C: ?Sized> {
    pub client: &'a C,
    pub templates: &'a TemplateSet,
}

impl<C: ?Sized> Clone for Teacher<'_, C> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<C: ?Sized> Copy for Teacher<'_, C> {}

fn attempt_note(attempt: u32, problem: &str) -> String {
    alloc::format!("\n(Attempt {attempt}: the previous reply {problem}. Follow the format exactly.)")
}

/// Elements whose `(role, content)` pair is absent from `before`.
pub fn new_elements(before: Option<&UiState>, after: &UiState) -> String {
    let Some(before) = before else { return "None".to_string() };
    let old: BTreeSet<(&str, &str)> = before.elements().map(|e| (e.role.as_str(), e.content_str())).collect();
    let mut lines = Vec::new();
    for id in after.document_order() {
        let e = after.get(id).expect("ordered ids exist");
        if id == after.root_id() && after.domain() == Domain::Mobile {
            continue;
        }
        if !old.contains(&(e.role.as_str(), e.content_str())) {
            lines.push(alloc::format!("[{}] {} {}", e.id, e.role, crate::axtree::py_repr(e.content_str())));
        }
    }
    if lines.is_empty() {
        "None".to_string()
    } else {
        lines.join("\n")
    }
}

impl<'a, C: ChatClient + ?Sized> Teacher<'a, C> {
    pub fn new(client: &'a C, templates: &'a TemplateSet) -> Self {
        Self { client, templates }
    }

    fn render(&self, domain: Domain, name: &str, slots: &[(&str, &str)]) -> Result<Prompt, RolloutError> {
        self.templates.render(domain, name, slots).map_err(|e| RolloutError::Template(e.to_string()))
    }

    fn call(&self, prompt: &Prompt) -> Result<String, RolloutError> {
        self.client.complete(prompt).map_err(|e| RolloutError::Teacher(e.to_string()))
    }

    /// Candidate controls for `state`, at most `max` of them. `prev` carries
    /// the finished control, the history and the elements that appeared in
    /// the last step.
    pub fn propose_controls(
        &self,
        state: &UiState,
        observation: &Observation,
        prev: Option<(&TaskControl, &ActionHistory, &str)>,
        max: usize,
    ) -> Result<Vec<String>, RolloutError> {
        let domain = state.domain();
        let max_s = max.to_string();
        let mut prompt = match prev {
            None => self.render(
                domain,
                names::PROPOSE_FIRST,
                &[("url", state.url_or_app()), ("observation", &observation.rendered_text), ("max_controls", &max_s)],
            )?,
            Some((control, history, fresh)) => {
                if !control.done {
                    return Err(RolloutError::Config("new controls are proposed only after the previous one is done".into()));
                }
                let h = history.render();
                self.render(
                    domain,
                    names::PROPOSE_NEXT,
                    &[
                        ("url", state.url_or_app()),
                        ("previous_control", &control.text),
                        ("history", &h),
                        ("new_elements", fresh),
                        ("observation", &observation.rendered_text),
                        ("max_controls", &max_s),
                    ],
                )?
            }
        };
        for attempt in 0..2 {
            if attempt > 0 {
                prompt.user.push_str(&attempt_note(attempt, "listed no task controls"));
            }
            let reply = self.call(&prompt)?;
            let secs = sections(&reply, &["Thought", "Task controls"]);
            let mut items = secs.get("Task controls").map(|s| list_items(s)).unwrap_or_default();
            items.dedup();
            items.truncate(max);
            if !items.is_empty() {
                return Ok(items);
            }
        }
        Err(RolloutError::NoControlsParsed)
    }

    /// Whether `control` is complete. An empty history means nothing was
    /// tried yet and returns false without asking. Unreadable replies count
    /// as not done.
    pub fn check_done(&self, control: &TaskControl, since_control: &ActionHistory, observation: &Observation, domain: Domain) -> bool {
        if since_control.is_empty() {
            return false;
        }
        let h = since_control.render();
        let prompt = match self.render(
            domain,
            names::CHECK_DONE,
            &[("control", &control.text), ("history", &h), ("observation", &observation.rendered_text)],
        ) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("check_done: {e}");
                return false;
            }
        };
        match self.call(&prompt) {
            Ok(reply) => match sections(&reply, &["Thought", "Answer"]).get("Answer").and_then(|a| yes_no(a)) {
                Some(done) => done,
                None => {
                    log::warn!("check_done: no Yes/No answer in the teacher reply; treating the control as not done");
                    false
                }
            },
            Err(e) => {
                log::warn!("check_done: {e}; treating the control as not done");
                false
            }
        }
    }

    /// Thought, action and summary toward `control`. Replies that lack a
    /// section, carry an unparsable action or fail `validate` are resampled
    /// once with a note saying what was wrong.
    pub fn generate_step(
        &self,
        domain: Domain,
        observation: &Observation,
        control: &TaskControl,
        history: &ActionHistory,
        extra_note: Option<&str>,
        validate: &dyn Fn(&Action) -> Result<(), String>,
    ) -> Result<StepProposal, RolloutError> {
        if observation.is_empty() {
            return Err(RolloutError::EmptyObservation);
        }
        let h = history.render();
        let mut note = extra_note.map(|n| alloc::format!("\n({n})")).unwrap_or_default();
        let mut problem = String::new();
        for attempt in 0..2u32 {
            if attempt > 0 {
                note.push_str(&attempt_note(attempt, &problem));
            }
            let prompt = self.render(
                domain,
                names::STEP,
                &[("control", &control.text), ("history", &h), ("observation", &observation.rendered_text), ("attempt_note", &note)],
            )?;
            let reply = self.call(&prompt)?;
            match parse_step(&reply, domain) {
                Ok(p) => match validate(&p.action) {
                    Ok(()) => return Ok(p),
                    Err(e) => problem = e,
                },
                Err(e) => problem = e,
            }
        }
        Err(RolloutError::StepGeneration(problem))
    }
}

/// Parses a `Thought` / `Action` / `Task` reply.
pub fn parse_step(reply: &str, domain: Domain) -> Result<StepProposal, String> {
    let secs = sections(reply, &["Thought", "Action", "Task"]);
    let action_text = secs.get("Action").filter(|s| !s.is_empty()).ok_or("had no Action section")?;
    let line = action_text.lines().next().unwrap_or("").trim().trim_matches('`');
    let action = parse_action(line, domain).map_err(|e| alloc::format!("had an unusable action ({e})"))?;
    Ok(StepProposal {
        thought: secs.get("Thought").cloned().unwrap_or_default(),
        action,
        summary: secs.get("Task").cloned().unwrap_or_default(),
    })
}

fn draw<R: Rng>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Runs one rollout from `initial`.
///
/// Controls are drawn with a ChaCha8 generator seeded by `seed`, so the run is
/// a pure function of its inputs when the clients are deterministic.
pub fn run_rollout<C, W>(
    initial: UiState,
    cfg: &RolloutConfig,
    teacher: &Teacher<'_, C>,
    world: &W,
    seed: u64,
) -> Result<RawRollout, RolloutError>
where
    C: ChatClient + ?Sized,
    W: WorldModel + ?Sized,
{
    cfg.validate()?;
    if initial.domain() != cfg.domain {
        return Err(RolloutError::Config("initial state domain differs from the config".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = cfg.domain;
    let mut session = BrowsingSession::new(initial);
    if session.observation().is_empty() {
        return Err(RolloutError::EmptyObservation);
    }
    let mut history = ActionHistory::new();
    let mut steps: Vec<RawStep> = Vec::new();
    let mut controls: Vec<ControlRecord> = Vec::new();
    let mut key_info = String::new();
    let mut since_control = ActionHistory::new();
    let mut previous_state: Option<UiState> = None;
    let mut terminated_by = TerminatedBy::Budget;
    let mut failure = None;

    let finish = |session: &BrowsingSession, steps, controls, key_info, terminated_by, failure| RawRollout {
        domain,
        steps,
        final_state: session.state().clone(),
        final_observation: session.observation(),
        controls,
        key_info,
        terminated_by,
        failure,
    };

    for t in 0..cfg.max_steps {
        let observation = session.observation();
        let needs_control = match controls.last() {
            None => true,
            Some(rec) => teacher.check_done(&rec.control, &since_control, &observation, domain),
        };
        if needs_control {
            let fresh = new_elements(previous_state.as_ref(), session.state());
            let prev = controls.last_mut().map(|rec| {
                rec.control.done = true;
                &rec.control
            });
            let proposals = match teacher.propose_controls(
                session.state(),
                &observation,
                prev.map(|c| (c, &history, fresh.as_str())),
                cfg.controls_per_proposal,
            ) {
                Ok(p) => p,
                Err(e) => {
                    return Ok(finish(&session, steps, controls, key_info, TerminatedBy::StepFailure, Some(e.to_string())));
                }
            };
            let pick = draw(&mut rng, proposals.len());
            let mut alternatives = proposals;
            let text = alternatives.remove(pick);
            controls.push(ControlRecord { control: TaskControl { text, proposed_at_step: t, done: false }, alternatives });
            since_control = ActionHistory::new();
        }
        let control_index = controls.len() - 1;
        let control = controls[control_index].control.clone();

        let validate = |a: &Action| -> Result<(), String> {
            if let Some(id) = a.target() {
                if !observation.contains(id) {
                    return Err(alloc::format!("targeted element {id}, which is not on the visible page"));
                }
            }
            match session.apply_rule(a) {
                Ok(_) => Ok(()),
                Err(e) => Err(alloc::format!("chose `{}`, which cannot be applied ({e})", render_action(a))),
            }
        };

        let mut note: Option<String> = None;
        let mut outcome = None;
        for _ in 0..2 {
            let proposal = match teacher.generate_step(domain, &observation, &control, &history, note.as_deref(), &validate) {
                Ok(p) => p,
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            };
            if proposal.action.is_stop() {
                outcome = Some((proposal, None));
                break;
            }
            match session.step(&proposal.action, &history, &key_info, world) {
                Ok(out) => {
                    outcome = Some((proposal, Some(out)));
                    break;
                }
                Err(TransitionError::Simulator(f)) => {
                    log::warn!("world model failed on `{}`: {f}", render_action(&proposal.action));
                    failure = Some(f.to_string());
                    note = Some(alloc::format!(
                        "The action `{}` could not be simulated; choose a different action",
                        render_action(&proposal.action)
                    ));
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        let Some((proposal, out)) = outcome else {
            terminated_by = TerminatedBy::StepFailure;
            break;
        };
        failure = None;

        let pre_state = session.state().clone();
        let is_stop = proposal.action.is_stop();
        steps.push(RawStep {
            state: pre_state.clone(),
            observation,
            thought: proposal.thought.clone(),
            action: proposal.action.clone(),
            summary: proposal.summary.clone(),
            control: control_index,
            retrieved: out.as_ref().and_then(|o| o.model.as_ref()).and_then(|m| m.retrieved),
        });
        history.push(proposal.thought.clone(), proposal.action.clone(), proposal.summary.clone());
        since_control.push(proposal.thought, proposal.action, proposal.summary);
        if is_stop {
            terminated_by = TerminatedBy::Stop;
            break;
        }
        let out = out.expect("non-stop steps carry a transition");
        if let Some(update) = out.model.as_ref().and_then(|m| m.key_info_update.as_deref()) {
            if !key_info.is_empty() {
                key_info.push('\n');
            }
            key_info.push_str(&alloc::format!("[step {}] {update}", t + 1));
        }
        previous_state = Some(pre_state);
        session = out.session;
    }
    Ok(finish(&session, steps, controls, key_info, terminated_by, failure))
}
