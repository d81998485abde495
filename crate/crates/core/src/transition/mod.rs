//! Rule-based transitions and the browsing session.
//!
//! Deterministic actions (typing, scrolling, tab and history navigation) are
//! applied here without consulting the world model. Everything else is handed
//! to a [`WorldModel`], whose output becomes a new node in the active tab's
//! history tree.

mod viewport;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{Action, ActionHistory};
use crate::axtree::{Domain, ElementId, Observation, UiState};
use crate::simulator::StepFailure;

pub use viewport::{observe, Viewport, MOBILE_WINDOW, WEB_WINDOW};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("element {0} is not in the current state")]
    TargetMissing(ElementId),
    #[error("go_forward is only available after a go_back")]
    ForwardUnavailable,
    #[error("no previous page to go back to")]
    BackUnavailable,
    #[error("cannot close the last open tab")]
    LastTabClose,
    #[error("tab index {index} out of range ({open} open)")]
    TabOutOfRange { index: u32, open: usize },
    #[error("`{verb}` is not part of the {domain} action space")]
    NotInActionSpace { verb: &'static str, domain: Domain },
    #[error(transparent)]
    Simulator(#[from] StepFailure),
}

/// Everything a world model needs to produce the next state.
#[derive(Debug, Clone, Copy)]
pub struct TransitionRequest<'a> {
    pub state: &'a UiState,
    pub observation: &'a Observation,
    pub action: &'a Action,
    pub history: &'a ActionHistory,
    pub key_info: &'a str,
    /// Smallest id the new state may use; ids below it belong to earlier
    /// states of the same session.
    pub id_floor: u32,
    pub viewport: Viewport,
}

/// World-model output for one unhandled action.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTransition {
    pub next_state: UiState,
    pub is_new_page: bool,
    pub key_info_update: Option<String>,
    pub retrieved: Option<usize>,
}

/// Produces next states for actions the rules do not handle.
pub trait WorldModel {
    fn transition(&self, request: &TransitionRequest<'_>) -> Result<ModelTransition, StepFailure>;
}

impl<T: WorldModel + ?Sized> WorldModel for &T {
    fn transition(&self, request: &TransitionRequest<'_>) -> Result<ModelTransition, StepFailure> {
        (**self).transition(request)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct HistoryNode {
    state: Arc<UiState>,
    viewport: Viewport,
    parent: Option<usize>,
    /// Child the cursor last came back from; set by go_back.
    forward: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
struct Tab {
    nodes: Vec<HistoryNode>,
    cursor: usize,
}

impl Tab {
    fn new(state: Arc<UiState>, viewport: Viewport) -> Self {
        Self { nodes: alloc::vec![HistoryNode { state, viewport, parent: None, forward: None }], cursor: 0 }
    }

    fn current(&self) -> &HistoryNode {
        &self.nodes[self.cursor]
    }

    fn current_mut(&mut self) -> &mut HistoryNode {
        &mut self.nodes[self.cursor]
    }

    /// Adds a child of the cursor node and moves there. Earlier forward
    /// branches stay in the tree.
    fn push(&mut self, state: Arc<UiState>, viewport: Viewport) {
        let parent = self.cursor;
        self.nodes[parent].forward = None;
        self.nodes.push(HistoryNode { state, viewport, parent: Some(parent), forward: None });
        self.cursor = self.nodes.len() - 1;
    }
}

/// Tabs, each with a history tree of `(state, viewport)` nodes.
///
/// Cloning is cheap: states are shared.
#[derive(Clone, Debug, PartialEq)]
pub struct BrowsingSession {
    domain: Domain,
    tabs: Vec<Tab>,
    active: usize,
    home: Option<Arc<UiState>>,
    next_free_id: u32,
}

impl BrowsingSession {
    /// Starts a one-tab session. Mobile sessions remember `initial` as the
    /// launcher screen for `navigate_home`.
    pub fn new(initial: UiState) -> Self {
        let domain = initial.domain();
        let viewport = Viewport::for_domain(domain);
        let next_free_id = next_id_after(&initial);
        let initial = Arc::new(initial);
        let home = (domain == Domain::Mobile).then(|| initial.clone());
        Self { domain, tabs: alloc::vec![Tab::new(initial, viewport)], active: 0, home, next_free_id }
    }

    pub fn with_viewport(mut self, viewport: Viewport) -> Self {
        self.tabs[self.active].current_mut().viewport = viewport;
        self
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn state(&self) -> &UiState {
        &self.tabs[self.active].current().state
    }

    pub fn shared_state(&self) -> Arc<UiState> {
        self.tabs[self.active].current().state.clone()
    }

    pub fn viewport(&self) -> Viewport {
        self.tabs[self.active].current().viewport
    }

    pub fn observation(&self) -> Observation {
        observe(self.state(), &self.viewport())
    }

    pub fn tab_count(&self) -> usize {
        self.tabs.len()
    }

    pub fn active_tab(&self) -> usize {
        self.active
    }

    /// Number of nodes in the active tab's history tree.
    pub fn history_len(&self) -> usize {
        self.tabs[self.active].nodes.len()
    }

    pub fn can_go_forward(&self) -> bool {
        self.tabs[self.active].current().forward.is_some()
    }

    /// Smallest id not used by any state this session has seen.
    pub fn next_free_id(&self) -> u32 {
        self.next_free_id
    }

    fn tab_mut(&mut self) -> &mut Tab {
        &mut self.tabs[self.active]
    }

    fn note_ids(&mut self, state: &UiState) {
        self.next_free_id = self.next_free_id.max(next_id_after(state));
    }

    /// Applies the deterministic part of `action`.
    ///
    /// Returns the new session and whether the action was fully handled. A
    /// `type` with press-enter appends the text here and still reports
    /// `false`, leaving the submit to the world model.
    pub fn apply_rule(&self, action: &Action) -> Result<(BrowsingSession, bool), TransitionError> {
        if !action.allowed_in(self.domain) {
            return Err(TransitionError::NotInActionSpace { verb: action.verb(), domain: self.domain });
        }
        let mut next = self.clone();
        let handled = match action {
            Action::Type { id, text, press_enter } => {
                next.append_text(*id, text)?;
                !*press_enter
            }
            Action::InputText { id, text } => {
                next.append_text(*id, text)?;
                true
            }
            Action::Scroll { direction } => {
                let node = next.tab_mut().current_mut();
                node.viewport = node.viewport.scrolled(*direction);
                true
            }
            Action::NewTab => {
                let id = next.next_free_id;
                let blank = UiState::blank_web(id, "New Tab");
                next.note_ids(&blank);
                next.tabs.push(Tab::new(Arc::new(blank), Viewport::for_domain(self.domain)));
                next.active = next.tabs.len() - 1;
                true
            }
            Action::TabFocus { index } => {
                let i = *index as usize;
                if i >= next.tabs.len() {
                    return Err(TransitionError::TabOutOfRange { index: *index, open: next.tabs.len() });
                }
                next.active = i;
                true
            }
            Action::CloseTab => {
                if next.tabs.len() == 1 {
                    return Err(TransitionError::LastTabClose);
                }
                next.tabs.remove(next.active);
                next.active = next.active.min(next.tabs.len() - 1);
                true
            }
            Action::GoBack | Action::NavigateBack => {
                let tab = next.tab_mut();
                let from = tab.cursor;
                let parent = tab.current().parent.ok_or(TransitionError::BackUnavailable)?;
                tab.nodes[parent].forward = Some(from);
                tab.cursor = parent;
                true
            }
            Action::GoForward => {
                let tab = next.tab_mut();
                let to = tab.current().forward.ok_or(TransitionError::ForwardUnavailable)?;
                tab.cursor = to;
                true
            }
            Action::NavigateHome => match next.home.clone() {
                Some(home) => {
                    let vp = Viewport::for_domain(self.domain);
                    next.tab_mut().push(home, vp);
                    true
                }
                None => false,
            },
            Action::Stop { .. } => true,
            Action::Click { .. }
            | Action::Hover { .. }
            | Action::Press { .. }
            | Action::Goto { .. }
            | Action::OpenApp { .. }
            | Action::KeyboardEnter
            | Action::Wait => false,
        };
        Ok((next, handled))
    }

    fn append_text(&mut self, id: ElementId, text: &str) -> Result<(), TransitionError> {
        let domain = self.domain;
        let node = self.tab_mut().current_mut();
        if !node.state.contains(id) {
            return Err(TransitionError::TargetMissing(id));
        }
        let updated = node
            .state
            .with_element_updated(id, |el| match domain {
                Domain::Web => {
                    let mut content = el.content.take().unwrap_or_default();
                    content.push_str(text);
                    el.content = Some(content);
                }
                Domain::Mobile => {
                    let mut desc = String::from(el.attributes.get("content_description").unwrap_or(""));
                    desc.push_str(text);
                    el.attributes.insert("content_description", desc);
                }
            })
            .map_err(|_| TransitionError::TargetMissing(id))?;
        node.state = Arc::new(updated);
        Ok(())
    }

    /// Rule first; otherwise one world-model call whose state becomes a new
    /// history node with offsets reset to (0, 0).
    pub fn step<W: WorldModel + ?Sized>(
        &self,
        action: &Action,
        history: &ActionHistory,
        key_info: &str,
        model: &W,
    ) -> Result<StepOutcome, TransitionError> {
        let (mut next, handled) = self.apply_rule(action)?;
        if handled {
            return Ok(StepOutcome { session: next, model: None });
        }
        let observation = next.observation();
        let request = TransitionRequest {
            state: next.state(),
            observation: &observation,
            action,
            history,
            key_info,
            id_floor: next.next_free_id,
            viewport: next.viewport(),
        };
        let out = model.transition(&request)?;
        next.note_ids(&out.next_state);
        let vp = next.viewport().reset();
        next.tab_mut().push(Arc::new(out.next_state.clone()), vp);
        Ok(StepOutcome { session: next, model: Some(out) })
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            active_tab: self.active,
            tabs: self
                .tabs
                .iter()
                .map(|t| TabSnapshot {
                    cursor: t.cursor,
                    nodes: t
                        .nodes
                        .iter()
                        .map(|n| NodeSnapshot {
                            state: (*n.state).clone(),
                            viewport: n.viewport,
                            parent: n.parent,
                            forward: n.forward,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn next_id_after(state: &UiState) -> u32 {
    state.max_real_id().map_or(0, |id| id.0.saturating_add(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub session: BrowsingSession,
    /// Present when the world model produced the new state.
    pub model: Option<ModelTransition>,
}

/// Serializable view of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub active_tab: usize,
    pub tabs: Vec<TabSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabSnapshot {
    pub cursor: usize,
    pub nodes: Vec<NodeSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub state: UiState,
    pub viewport: Viewport,
    pub parent: Option<usize>,
    pub forward: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{parse_action, Direction};
    use crate::axtree::parse_web_tree;
    use core::cell::Cell;

    struct Pages {
        calls: Cell<usize>,
    }

    impl WorldModel for Pages {
        fn transition(&self, req: &TransitionRequest<'_>) -> Result<ModelTransition, StepFailure> {
            let n = self.calls.get();
            self.calls.set(n + 1);
            let id = req.id_floor;
            let next_state = match req.state.domain() {
                Domain::Web => UiState::blank_web(id, &alloc::format!("page {n}")),
                Domain::Mobile => crate::axtree::parse_mobile_elements(&alloc::format!(
                    "Element {id}: UIElement(text=page {n}, class_name=android.widget.TextView)"
                ))
                .unwrap(),
            };
            Ok(ModelTransition {
                next_state,
                is_new_page: true,
                key_info_update: None,
                retrieved: None,
            })
        }
    }

    fn start() -> BrowsingSession {
        BrowsingSession::new(
            parse_web_tree("[1] RootWebArea 'home'\n\t[5] textbox '' bbox: [0,10,0,10]\n\t[6] link 'go'").unwrap(),
        )
    }

    fn act(s: &str) -> Action {
        parse_action(s, Domain::Web).unwrap()
    }

    #[test]
    fn scroll_keeps_state_and_moves_offsets() {
        let s = start();
        let (next, handled) = s.apply_rule(&act("scroll [down]")).unwrap();
        assert!(handled);
        assert_eq!(next.state(), s.state());
        assert_eq!((next.viewport().x_offset, next.viewport().y_offset), (0, 1080));
        let (up, _) = s.apply_rule(&act("scroll [up]")).unwrap();
        assert_eq!(up.viewport().y_offset, 0);
    }

    #[test]
    fn type_appends_to_content() {
        let s = start();
        let (next, handled) = s.apply_rule(&act("type [5] [hello] [0]")).unwrap();
        assert!(handled);
        assert_eq!(next.state().get(ElementId(5)).unwrap().content.as_deref(), Some("hello"));
        let (enter, handled) = next.apply_rule(&act("type [5] [ world] [1]")).unwrap();
        assert!(!handled);
        assert_eq!(enter.state().get(ElementId(5)).unwrap().content.as_deref(), Some("hello world"));
        assert_eq!(s.apply_rule(&act("type [99] [x] [0]")).unwrap_err(), TransitionError::TargetMissing(ElementId(99)));
    }

    #[test]
    fn forward_requires_back() {
        let s = start();
        assert_eq!(s.apply_rule(&act("go_forward")).unwrap_err(), TransitionError::ForwardUnavailable);
        assert_eq!(s.apply_rule(&act("go_back")).unwrap_err(), TransitionError::BackUnavailable);
    }

    #[test]
    fn click_delegates_once_and_scroll_never() {
        let pages = Pages { calls: Cell::new(0) };
        let h = ActionHistory::new();
        let s = start();
        let out = s.step(&act("scroll [down]"), &h, "", &pages).unwrap();
        assert_eq!(pages.calls.get(), 0);
        assert!(out.model.is_none());
        let out = out.session.step(&act("click [6]"), &h, "", &pages).unwrap();
        assert_eq!(pages.calls.get(), 1);
        assert_eq!(out.session.viewport().y_offset, 0);
        assert_eq!(out.session.state().root_id(), ElementId(7));
        assert_eq!(out.session.history_len(), 2);
    }

    #[test]
    fn tabs() {
        let s = start();
        assert_eq!(s.apply_rule(&act("close_tab")).unwrap_err(), TransitionError::LastTabClose);
        let (two, _) = s.apply_rule(&act("new_tab")).unwrap();
        assert_eq!((two.tab_count(), two.active_tab()), (2, 1));
        assert_eq!(two.state().root().content.as_deref(), Some("New Tab"));
        assert!(two.state().root_id().0 >= 7);
        let (focused, _) = two.apply_rule(&act("tab_focus [0]")).unwrap();
        assert_eq!(focused.state(), s.state());
        assert!(matches!(two.apply_rule(&act("tab_focus [5]")), Err(TransitionError::TabOutOfRange { .. })));
        let (closed, _) = two.apply_rule(&act("close_tab")).unwrap();
        assert_eq!((closed.tab_count(), closed.active_tab()), (1, 0));
    }

    #[test]
    fn mobile_home_and_back() {
        let home = crate::axtree::parse_mobile_elements("Element 0: UIElement(text=Contacts, class_name=android.widget.TextView)").unwrap();
        let s = BrowsingSession::new(home.clone());
        assert_eq!(s.viewport(), Viewport::mobile());
        let pages = Pages { calls: Cell::new(0) };
        let h = ActionHistory::new();
        let clicked = s.step(&Action::Click { id: ElementId(0) }, &h, "", &pages).unwrap().session;
        let (homed, handled) = clicked.apply_rule(&Action::NavigateHome).unwrap();
        assert!(handled);
        assert_eq!(homed.state(), &home);
        let (back, _) = homed.apply_rule(&Action::NavigateBack).unwrap();
        assert_eq!(back.state(), clicked.state());
        assert!(matches!(s.apply_rule(&Action::NewTab), Err(TransitionError::NotInActionSpace { .. })));
        let _ = Direction::Up;
    }
}
