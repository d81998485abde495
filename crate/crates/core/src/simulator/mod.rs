//! The model-backed world simulator.
//!
//! A new state is produced in three calls: an overview of what the action
//! leads to, a free-text draft of the resulting content, and a conversion of
//! the draft into the domain's tree format. Coordinates are then assigned by a
//! fixed flow layout. With a transition corpus the draft is grounded in the
//! closest recorded real state.

mod layout;
mod merge;

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{render_action, Action, ActionHistory};
use crate::axtree::{Domain, Observation, UiState};
use crate::client::{ChatClient, Prompt};
use crate::prompt::{names, sections, strip_code_fence, yes_no, TemplateSet};
use crate::retrieval::{Reranker, TransitionCorpus, TransitionRecord};
use crate::transition::{ModelTransition, TransitionRequest, Viewport, WorldModel};

pub use layout::{assign_coordinates, LEAF_HEIGHT, SECTION_PADDING};
pub use merge::merge_partial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Overview,
    Draft,
    Structure,
    Fused,
    Retrieval,
    Merge,
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Stage::Overview => "overview",
            Stage::Draft => "draft",
            Stage::Structure => "structure",
            Stage::Fused => "fused",
            Stage::Retrieval => "retrieval",
            Stage::Merge => "merge",
        })
    }
}

/// A simulator stage that could not produce usable output.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{stage} stage failed: {reason}")]
pub struct StepFailure {
    pub stage: Stage,
    pub reason: String,
}

impl StepFailure {
    pub fn new(stage: Stage, reason: impl Into<String>) -> Self {
        Self { stage, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    #[default]
    RetrievalFree,
    RetrievalAugmented,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationRequest<'a> {
    pub current_state: &'a UiState,
    pub observation: &'a Observation,
    pub action: &'a Action,
    pub history: &'a ActionHistory,
    pub key_info: &'a str,
    pub retrieved: Option<&'a TransitionRecord>,
    pub id_floor: u32,
    pub viewport: Viewport,
}

impl SimulationRequest<'_> {
    pub fn mode(&self) -> SimulationMode {
        if self.retrieved.is_some() {
            SimulationMode::RetrievalAugmented
        } else {
            SimulationMode::RetrievalFree
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overview {
    pub thought: String,
    pub new_window: String,
    pub key_info_update: Option<String>,
    pub is_new_page: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub overview: String,
    pub draft: String,
    pub next_state: UiState,
    pub is_new_page: bool,
    pub key_info_update: Option<String>,
}

/// Stateless pipeline over a chat client and a template set.
pub struct Simulator<'a, C: ?Sized> {
    pub client: &'a C,
    pub templates: &'a TemplateSet,
    /// Single-call ablation: one prompt returns overview fields and the state.
    pub fused: bool,
}

impl<C: ?Sized> Clone for Simulator<'_, C> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<C: ?Sized> Copy for Simulator<'_, C> {}

fn key_info_text(k: &str) -> &str {
    if k.trim().is_empty() {
        "None"
    } else {
        k
    }
}

fn retry_note(prompt: &mut Prompt, attempt: u32, problem: &str) {
    prompt.user.push_str(&alloc::format!("\n\n(Attempt {attempt}: the previous reply {problem}. Follow the format exactly.)"));
}

fn absent_if_none(v: Option<&String>) -> Option<String> {
    v.map(|s| s.trim()).filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none")).map(str::to_string)
}

impl<'a, C: ChatClient + ?Sized> Simulator<'a, C> {
    pub fn new(client: &'a C, templates: &'a TemplateSet) -> Self {
        Self { client, templates, fused: false }
    }

    pub fn fused(mut self, on: bool) -> Self {
        self.fused = on;
        self
    }

    fn render(&self, domain: Domain, name: &str, stage: Stage, slots: &[(&str, &str)]) -> Result<Prompt, StepFailure> {
        self.templates.render(domain, name, slots).map_err(|e| StepFailure::new(stage, e.to_string()))
    }

    fn call(&self, stage: Stage, prompt: &Prompt) -> Result<String, StepFailure> {
        self.client.complete(prompt).map_err(|e| StepFailure::new(stage, e.to_string()))
    }

    pub fn predict_overview(&self, req: &SimulationRequest<'_>) -> Result<Overview, StepFailure> {
        let domain = req.current_state.domain();
        let action = render_action(req.action);
        let history = req.history.render();
        let mut prompt = self.render(
            domain,
            names::OVERVIEW,
            Stage::Overview,
            &[
                ("url", req.current_state.url_or_app()),
                ("observation", &req.observation.rendered_text),
                ("history", &history),
                ("key_info", key_info_text(req.key_info)),
                ("action", &action),
            ],
        )?;
        let mut problem = String::new();
        for attempt in 0..2 {
            if attempt > 0 {
                retry_note(&mut prompt, attempt, &problem);
            }
            let reply = self.call(Stage::Overview, &prompt)?;
            match parse_overview(&reply) {
                Ok(o) => return Ok(o),
                Err(p) => problem = p,
            }
        }
        Err(StepFailure::new(Stage::Overview, problem))
    }

    /// Free-text content of the next state. With a reference record the draft
    /// is written from its resulting state.
    pub fn generate_draft(
        &self,
        domain: Domain,
        overview: &str,
        key_info: &str,
        action: &Action,
        observation: &Observation,
        reference: Option<&UiState>,
    ) -> Result<String, StepFailure> {
        if overview.trim().is_empty() {
            return Err(StepFailure::new(Stage::Draft, "overview is empty"));
        }
        let mut prompt = match reference {
            Some(r) => {
                let text = r.to_text();
                self.render(
                    domain,
                    names::DRAFT_RAG,
                    Stage::Draft,
                    &[
                        ("surface", surface(domain)),
                        ("overview", overview),
                        ("key_info", key_info_text(key_info)),
                        ("reference", &text),
                    ],
                )?
            }
            None => {
                let a = render_action(action);
                self.render(
                    domain,
                    names::DRAFT,
                    Stage::Draft,
                    &[
                        ("overview", overview),
                        ("key_info", key_info_text(key_info)),
                        ("action", &a),
                        ("observation", &observation.rendered_text),
                    ],
                )?
            }
        };
        for attempt in 0..2 {
            if attempt > 0 {
                retry_note(&mut prompt, attempt, "was empty");
            }
            let reply = self.call(Stage::Draft, &prompt)?;
            if !reply.trim().is_empty() {
                return Ok(reply.trim().to_string());
            }
        }
        Err(StepFailure::new(Stage::Draft, "empty response"))
    }

    /// Converts a draft into a state with ids starting at `id_floor`.
    pub fn structure_draft(&self, domain: Domain, draft: &str, id_floor: u32) -> Result<UiState, StepFailure> {
        if draft.trim().is_empty() {
            return Err(StepFailure::new(Stage::Structure, "draft is empty"));
        }
        let floor = id_floor.to_string();
        let prompt = self.render(domain, names::STRUCTURE, Stage::Structure, &[("draft", draft), ("id_floor", &floor)])?;
        let reply = self.call(Stage::Structure, &prompt)?;
        let error = match parse_state(domain, &reply, id_floor) {
            Ok(s) => return Ok(s),
            Err(e) => e,
        };
        let repair = self.render(
            domain,
            names::STRUCTURE_REPAIR,
            Stage::Structure,
            &[("draft", draft), ("previous", reply.trim()), ("error", &error), ("id_floor", &floor)],
        )?;
        let reply = self.call(Stage::Structure, &repair)?;
        parse_state(domain, &reply, id_floor).map_err(|e| StepFailure::new(Stage::Structure, e))
    }

    fn simulate_fused(&self, req: &SimulationRequest<'_>) -> Result<SimulationResult, StepFailure> {
        let domain = req.current_state.domain();
        let action = render_action(req.action);
        let history = req.history.render();
        let floor = req.id_floor.to_string();
        let mut prompt = self.render(
            domain,
            names::FUSED,
            Stage::Fused,
            &[
                ("url", req.current_state.url_or_app()),
                ("observation", &req.observation.rendered_text),
                ("history", &history),
                ("key_info", key_info_text(req.key_info)),
                ("action", &action),
                ("id_floor", &floor),
            ],
        )?;
        let mut problem = String::new();
        for attempt in 0..2 {
            if attempt > 0 {
                retry_note(&mut prompt, attempt, &problem);
            }
            let reply = self.call(Stage::Fused, &prompt)?;
            let overview = match parse_overview(&reply) {
                Ok(o) => o,
                Err(p) => {
                    problem = p;
                    continue;
                }
            };
            let secs = sections(&reply, &["Thought", "New window", "Key Info", "Answer", "State"]);
            let Some(state_text) = secs.get("State") else {
                problem = "had no State section".to_string();
                continue;
            };
            match parse_state(domain, state_text, req.id_floor) {
                Ok(delta) => {
                    let next_state = self.finish(req, &delta, overview.is_new_page)?;
                    return Ok(SimulationResult {
                        overview: overview.new_window,
                        draft: String::new(),
                        next_state,
                        is_new_page: overview.is_new_page,
                        key_info_update: overview.key_info_update,
                    });
                }
                Err(e) => problem = e,
            }
        }
        Err(StepFailure::new(Stage::Fused, problem))
    }

    fn finish(&self, req: &SimulationRequest<'_>, structured: &UiState, is_new_page: bool) -> Result<UiState, StepFailure> {
        let state = if is_new_page {
            structured.clone()
        } else {
            merge_partial(req.current_state, structured).map_err(|e| StepFailure::new(Stage::Merge, e.to_string()))?
        };
        Ok(assign_coordinates(&state, &req.viewport))
    }

    /// Overview, draft and structure, then layout. When the action does not
    /// open a new page the structured result is merged into the current state.
    pub fn simulate(&self, req: &SimulationRequest<'_>) -> Result<SimulationResult, StepFailure> {
        if self.fused {
            return self.simulate_fused(req);
        }
        let domain = req.current_state.domain();
        let overview = self.predict_overview(req)?;
        let draft = self.generate_draft(
            domain,
            &overview.new_window,
            req.key_info,
            req.action,
            req.observation,
            req.retrieved.map(|r| &r.state_after),
        )?;
        let structured = self.structure_draft(domain, &draft, req.id_floor)?;
        let next_state = self.finish(req, &structured, overview.is_new_page)?;
        Ok(SimulationResult {
            overview: overview.new_window,
            draft,
            next_state,
            is_new_page: overview.is_new_page,
            key_info_update: overview.key_info_update,
        })
    }

    /// Writes a fresh state from a description, grounded in `reference`.
    /// Two calls: a reference-grounded draft and its structuring.
    pub fn regenerate_state(
        &self,
        reference: &UiState,
        description: &str,
        key_info: &str,
        id_floor: u32,
        viewport: &Viewport,
    ) -> Result<UiState, StepFailure> {
        let domain = reference.domain();
        let empty = Observation { elements: alloc::vec::Vec::new(), rendered_text: String::new() };
        let draft = self.generate_draft(domain, description, key_info, &Action::Wait, &empty, Some(reference))?;
        let state = self.structure_draft(domain, &draft, id_floor)?;
        Ok(assign_coordinates(&state, viewport))
    }
}

fn surface(domain: Domain) -> &'static str {
    match domain {
        Domain::Web => "web page",
        Domain::Mobile => "phone screen",
    }
}

/// Parses the `New window` / `Key Info` / `Answer` reply.
pub fn parse_overview(reply: &str) -> Result<Overview, String> {
    let secs = sections(reply, &["Thought", "New window", "Key Info", "Answer", "State"]);
    let new_window = secs
        .get("New window")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| "lacked a New window section".to_string())?
        .clone();
    let is_new_page = secs
        .get("Answer")
        .and_then(|a| yes_no(a))
        .ok_or_else(|| "lacked a Yes/No Answer section".to_string())?;
    Ok(Overview {
        thought: secs.get("Thought").cloned().unwrap_or_default(),
        new_window,
        key_info_update: absent_if_none(secs.get("Key Info")),
        is_new_page,
    })
}

/// Parses model output as a state and renumbers it from `id_floor`.
pub fn parse_state(domain: Domain, reply: &str, id_floor: u32) -> Result<UiState, String> {
    let text = strip_code_fence(reply);
    let state = UiState::parse(domain, text).map_err(|e| e.to_string())?;
    if domain == Domain::Mobile && state.len() < 2 {
        return Err("the screen has no elements".to_string());
    }
    state.renumbered(id_floor).map_err(|e| e.to_string())
}

/// World model backed by the simulator, optionally retrieval-augmented.
pub struct LlmWorldModel<'a, C: ?Sized, R: ?Sized> {
    pub simulator: Simulator<'a, C>,
    pub retrieval: Option<(&'a TransitionCorpus, &'a R)>,
}

impl<'a, C: ChatClient + ?Sized> LlmWorldModel<'a, C, crate::retrieval::IdentityReranker> {
    pub fn retrieval_free(simulator: Simulator<'a, C>) -> Self {
        Self { simulator, retrieval: None }
    }
}

impl<'a, C: ChatClient + ?Sized, R: Reranker + ?Sized> LlmWorldModel<'a, C, R> {
    pub fn retrieval_augmented(simulator: Simulator<'a, C>, corpus: &'a TransitionCorpus, reranker: &'a R) -> Self {
        Self { simulator, retrieval: Some((corpus, reranker)) }
    }

    pub fn mode(&self) -> SimulationMode {
        if self.retrieval.is_some() {
            SimulationMode::RetrievalAugmented
        } else {
            SimulationMode::RetrievalFree
        }
    }
}

impl<C: ChatClient + ?Sized, R: Reranker + ?Sized> WorldModel for LlmWorldModel<'_, C, R> {
    fn transition(&self, r: &TransitionRequest<'_>) -> Result<ModelTransition, StepFailure> {
        let (retrieved, index) = match self.retrieval {
            Some((corpus, reranker)) => {
                let hit = corpus
                    .retrieve(&r.observation.rendered_text, r.history, reranker)
                    .map_err(|e| StepFailure::new(Stage::Retrieval, e.to_string()))?;
                if let Some(why) = &hit.reranker_fallback {
                    log::warn!("reranker fell back to BM25 order: {why}");
                }
                (corpus.get(hit.record), Some(hit.record))
            }
            None => (None, None),
        };
        let req = SimulationRequest {
            current_state: r.state,
            observation: r.observation,
            action: r.action,
            history: r.history,
            key_info: r.key_info,
            retrieved,
            id_floor: r.id_floor,
            viewport: r.viewport,
        };
        let out = self.simulator.simulate(&req)?;
        Ok(ModelTransition {
            next_state: out.next_state,
            is_new_page: out.is_new_page,
            key_info_update: out.key_info_update,
            retrieved: index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axtree::{parse_web_tree, ElementId};
    use crate::client::ModelError;
    use crate::transition::observe;
    use alloc::collections::VecDeque;
    use alloc::vec::Vec;
    use std::sync::Mutex;

    /// Pops canned replies in order and records the prompts.
    struct Canned {
        replies: Mutex<VecDeque<&'static str>>,
        seen: Mutex<Vec<Prompt>>,
    }

    impl Canned {
        fn new(r: &[&'static str]) -> Self {
            Self { replies: Mutex::new(r.iter().copied().collect()), seen: Mutex::new(Vec::new()) }
        }

        fn seen(&self) -> Vec<Prompt> {
            self.seen.lock().unwrap().clone()
        }
    }

    impl ChatClient for Canned {
        fn complete(&self, p: &Prompt) -> Result<String, ModelError> {
            self.seen.lock().unwrap().push(p.clone());
            self.replies.lock().unwrap().pop_front().map(String::from).ok_or(ModelError::Backend("exhausted".into()))
        }
    }

    fn home() -> UiState {
        let s = parse_web_tree(
            "[1] RootWebArea 'Shop' url: http://shop.test\n\t[2] section 'Header'\n\t\t[3] textbox 'Search'\n\t[4] section 'Deals'\n\t\t[5] link 'Blender'",
        )
        .unwrap();
        assign_coordinates(&s, &Viewport::web())
    }

    const OVERVIEW: &str = "Thought: search.\nNew window: A search results page for the keyword sneakers.\nKey Info: None\nAnswer: Yes";
    const DRAFT: &str = "Section: Results\nlink 'Sneaker A'\nlink 'Sneaker B'\nlink 'Sneaker C'";
    const TREE: &str = "```\n[1] RootWebArea 'Results'\n\t[2] section 'Results'\n\t\t[3] link 'Sneaker A'\n\t\t[4] link 'Sneaker B'\n\t\t[5] link 'Sneaker C'\n```";

    fn run(client: &Canned, action: &str, floor: u32) -> Result<SimulationResult, StepFailure> {
        let templates = TemplateSet::builtin();
        let sim = Simulator::new(client, &templates);
        let state = home();
        let obs = observe(&state, &Viewport::web());
        let action = crate::actions::parse_action(action, Domain::Web).unwrap();
        let history = ActionHistory::new();
        sim.simulate(&SimulationRequest {
            current_state: &state,
            observation: &obs,
            action: &action,
            history: &history,
            key_info: "",
            retrieved: None,
            id_floor: floor,
            viewport: Viewport::web(),
        })
    }

    #[test]
    fn three_calls_per_new_page() {
        let c = Canned::new(&[OVERVIEW, DRAFT, TREE]);
        let out = run(&c, "type [3] [sneakers] [1]", 6).unwrap();
        assert_eq!(c.seen().len(), 3);
        assert!(out.is_new_page);
        assert!(out.overview.contains("search results page"));
        assert_eq!(out.key_info_update, None);
        let ids: Vec<u32> = out.next_state.document_order().iter().map(|i| i.0).collect();
        assert_eq!(ids, [6, 7, 8, 9, 10]);
        assert!(!observe(&out.next_state, &Viewport::web()).is_empty());
        let seen = c.seen();
        let ids: Vec<&str> = seen.iter().map(|p| p.template_id.as_str()).collect();
        assert_eq!(ids, ["web/overview", "web/draft", "web/structure"]);
    }

    #[test]
    fn overview_retries_once_then_fails() {
        let c = Canned::new(&["garbage", "still garbage"]);
        let err = run(&c, "click [5]", 6).unwrap_err();
        assert_eq!(err.stage, Stage::Overview);
        let seen = c.seen();
        assert_eq!(seen.len(), 2);
        assert_ne!(seen[0], seen[1]);
    }

    #[test]
    fn structure_gets_one_repair() {
        let c = Canned::new(&[OVERVIEW, DRAFT, "not a tree", TREE]);
        assert!(run(&c, "click [5]", 6).is_ok());
        assert_eq!(c.seen()[3].template_id, "common/structure_repair");
        let c = Canned::new(&[OVERVIEW, DRAFT, "not a tree", "nope"]);
        assert_eq!(run(&c, "click [5]", 6).unwrap_err().stage, Stage::Structure);
    }

    #[test]
    fn partial_update_merges_by_heading() {
        let partial = "Thought: x\nNew window: Deals list expanded.\nKey Info: deals open\nAnswer: No";
        let tree = "[1] RootWebArea 'x'\n\t[2] section 'deals'\n\t\t[3] link 'Blender'\n\t\t[4] link 'Toaster'";
        let c = Canned::new(&[partial, DRAFT, tree]);
        let out = run(&c, "click [5]", 6).unwrap();
        assert!(!out.is_new_page);
        assert_eq!(out.key_info_update.as_deref(), Some("deals open"));
        let s = &out.next_state;
        assert_eq!(s.root_id(), ElementId(1));
        assert_eq!(s.root().children, [ElementId(2), ElementId(7)]);
        assert_eq!(s.get(ElementId(9)).unwrap().content.as_deref(), Some("Toaster"));
        assert!(s.get(ElementId(4)).is_none());
    }

    #[test]
    fn fused_mode_is_one_call() {
        let reply = "New window: results\nKey Info: None\nAnswer: Yes\nState:\n[1] RootWebArea 'R'\n\t[2] link 'A'";
        let c = Canned::new(&[reply]);
        let templates = TemplateSet::builtin();
        let sim = Simulator::new(&c, &templates).fused(true);
        let state = home();
        let obs = observe(&state, &Viewport::web());
        let out = sim
            .simulate(&SimulationRequest {
                current_state: &state,
                observation: &obs,
                action: &Action::Click { id: ElementId(5) },
                history: &ActionHistory::new(),
                key_info: "",
                retrieved: None,
                id_floor: 10,
                viewport: Viewport::web(),
            })
            .unwrap();
        assert_eq!(c.seen().len(), 1);
        assert_eq!(out.next_state.root_id(), ElementId(10));
    }
}
