//! Action grammar for the web and mobile action spaces.
//!
//! Canonical syntax is a lowercase verb followed by bracketed arguments:
//! `click [12]`, `type [10] [Web platform] [1]`, `input_text [4] [718-099-5256]`,
//! `scroll [down]`, `stop [answer]`. Bracket contents are taken verbatim and
//! may not contain `]`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axtree::{Domain, ElementId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Action {
    Click { id: ElementId },
    Type { id: ElementId, text: String, press_enter: bool },
    Hover { id: ElementId },
    Press { key_comb: String },
    Scroll { direction: Direction },
    GoForward,
    GoBack,
    NewTab,
    TabFocus { index: u32 },
    CloseTab,
    Goto { url: String },
    OpenApp { app_name: String },
    InputText { id: ElementId, text: String },
    KeyboardEnter,
    NavigateBack,
    NavigateHome,
    Wait,
    Stop { answer: Option<String> },
}

/// Verb set of each domain's action space.
pub const WEB_VERBS: &[&str] = &[
    "click", "type", "hover", "press", "scroll", "go_forward", "go_back", "new_tab", "tab_focus", "close_tab",
    "goto", "stop",
];
pub const MOBILE_VERBS: &[&str] = &[
    "click",
    "open_app",
    "input_text",
    "keyboard_enter",
    "scroll",
    "navigate_back",
    "navigate_home",
    "wait",
    "stop",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("empty action")]
    Empty,
    #[error("unknown verb `{verb}` for the {domain} action space")]
    UnknownVerb { verb: String, domain: Domain },
    #[error("`{verb}` takes {expected} bracketed argument(s), got {found}")]
    ArityMismatch { verb: String, expected: &'static str, found: usize },
    #[error("element id `{0}` is not a non-negative integer")]
    BadId(String),
    #[error("press-enter flag `{0}` must be 0 or 1")]
    BadFlag(String),
    #[error("scroll direction `{0}` must be up, down, left or right")]
    BadDirection(String),
    #[error("tab index `{0}` is not a non-negative integer")]
    BadIndex(String),
    #[error("`{0}` requires a non-empty argument")]
    EmptyArgument(String),
    #[error("malformed argument list: {0}")]
    Malformed(String),
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::Click { .. } => "click",
            Action::Type { .. } => "type",
            Action::Hover { .. } => "hover",
            Action::Press { .. } => "press",
            Action::Scroll { .. } => "scroll",
            Action::GoForward => "go_forward",
            Action::GoBack => "go_back",
            Action::NewTab => "new_tab",
            Action::TabFocus { .. } => "tab_focus",
            Action::CloseTab => "close_tab",
            Action::Goto { .. } => "goto",
            Action::OpenApp { .. } => "open_app",
            Action::InputText { .. } => "input_text",
            Action::KeyboardEnter => "keyboard_enter",
            Action::NavigateBack => "navigate_back",
            Action::NavigateHome => "navigate_home",
            Action::Wait => "wait",
            Action::Stop { .. } => "stop",
        }
    }

    /// Element the action is aimed at, if any.
    pub fn target(&self) -> Option<ElementId> {
        match self {
            Action::Click { id } | Action::Hover { id } | Action::Type { id, .. } | Action::InputText { id, .. } => {
                Some(*id)
            }
            _ => None,
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, Action::Stop { .. })
    }

    /// Whether the verb belongs to the domain's action space.
    pub fn allowed_in(&self, domain: Domain) -> bool {
        verbs(domain).contains(&self.verb())
    }

    /// Copy with the target element replaced.
    pub fn with_target(&self, new_id: ElementId) -> Action {
        let mut a = self.clone();
        match &mut a {
            Action::Click { id } | Action::Hover { id } | Action::Type { id, .. } | Action::InputText { id, .. } => {
                *id = new_id
            }
            _ => {}
        }
        a
    }
}

fn verbs(domain: Domain) -> &'static [&'static str] {
    match domain {
        Domain::Web => WEB_VERBS,
        Domain::Mobile => MOBILE_VERBS,
    }
}

/// Canonical single-line rendering.
pub fn render_action(a: &Action) -> String {
    let mut out = String::from(a.verb());
    let mut arg = |s: &str| {
        out.push_str(" [");
        out.push_str(s);
        out.push(']');
    };
    match a {
        Action::Click { id } | Action::Hover { id } => arg(&id.to_string()),
        Action::Type { id, text, press_enter } => {
            arg(&id.to_string());
            arg(text);
            arg(if *press_enter { "1" } else { "0" });
        }
        Action::InputText { id, text } => {
            arg(&id.to_string());
            arg(text);
        }
        Action::Press { key_comb } => arg(key_comb),
        Action::Scroll { direction } => arg(direction.as_str()),
        Action::TabFocus { index } => arg(&index.to_string()),
        Action::Goto { url } => arg(url),
        Action::OpenApp { app_name } => arg(app_name),
        Action::Stop { answer: Some(answer) } => arg(answer),
        Action::GoForward
        | Action::GoBack
        | Action::NewTab
        | Action::CloseTab
        | Action::KeyboardEnter
        | Action::NavigateBack
        | Action::NavigateHome
        | Action::Wait
        | Action::Stop { answer: None } => {}
    }
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_action(self))
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        render_action(&a)
    }
}

impl TryFrom<String> for Action {
    type Error = ActionParseError;

    /// Domain-agnostic parse used for deserialization; accepts the union of
    /// both verb sets.
    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_any(&s)
    }
}

/// Splits `verb [a] [b]...` into the verb and its bracketed arguments.
fn split(text: &str) -> Result<(&str, Vec<&str>), ActionParseError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ActionParseError::Empty);
    }
    let verb_end = text.find(|c: char| c == '[' || c.is_whitespace()).unwrap_or(text.len());
    let verb = &text[..verb_end];
    let mut rest = text[verb_end..].trim_start();
    let mut args = Vec::new();
    while !rest.is_empty() {
        let inner = rest
            .strip_prefix('[')
            .ok_or_else(|| ActionParseError::Malformed(rest.to_string()))?;
        let close = inner
            .find(']')
            .ok_or_else(|| ActionParseError::Malformed("unterminated `[`".to_string()))?;
        args.push(&inner[..close]);
        rest = inner[close + 1..].trim_start();
    }
    Ok((verb, args))
}

fn parse_id(s: &str) -> Result<ElementId, ActionParseError> {
    let t = s.trim();
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ActionParseError::BadId(s.to_string()));
    }
    t.parse::<u32>().map(ElementId).map_err(|_| ActionParseError::BadId(s.to_string()))
}

fn arity(verb: &str, args: &[&str], expected: &'static str, ok: bool) -> Result<(), ActionParseError> {
    if ok {
        Ok(())
    } else {
        Err(ActionParseError::ArityMismatch { verb: verb.to_string(), expected, found: args.len() })
    }
}

fn nonempty(verb: &str, s: &str) -> Result<String, ActionParseError> {
    if s.is_empty() {
        Err(ActionParseError::EmptyArgument(verb.to_string()))
    } else {
        Ok(s.to_string())
    }
}

fn build(verb: &str, args: &[&str]) -> Result<Action, ActionParseError> {
    let n = args.len();
    let action = match verb {
        "click" | "hover" => {
            arity(verb, args, "1", n == 1)?;
            let id = parse_id(args[0])?;
            if verb == "click" {
                Action::Click { id }
            } else {
                Action::Hover { id }
            }
        }
        "type" => {
            arity(verb, args, "3", n == 3)?;
            let id = parse_id(args[0])?;
            let press_enter = match args[2].trim() {
                "0" => false,
                "1" => true,
                other => return Err(ActionParseError::BadFlag(other.to_string())),
            };
            Action::Type { id, text: args[1].to_string(), press_enter }
        }
        "input_text" => {
            arity(verb, args, "2", n == 2)?;
            Action::InputText { id: parse_id(args[0])?, text: args[1].to_string() }
        }
        "press" => {
            arity(verb, args, "1", n == 1)?;
            Action::Press { key_comb: nonempty(verb, args[0])? }
        }
        "scroll" => {
            arity(verb, args, "1", n == 1)?;
            let direction = match args[0].trim() {
                "up" => Direction::Up,
                "down" => Direction::Down,
                "left" => Direction::Left,
                "right" => Direction::Right,
                other => return Err(ActionParseError::BadDirection(other.to_string())),
            };
            Action::Scroll { direction }
        }
        "tab_focus" => {
            arity(verb, args, "1", n == 1)?;
            let t = args[0].trim();
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(ActionParseError::BadIndex(args[0].to_string()));
            }
            let index = t.parse().map_err(|_| ActionParseError::BadIndex(args[0].to_string()))?;
            Action::TabFocus { index }
        }
        "goto" => {
            arity(verb, args, "1", n == 1)?;
            Action::Goto { url: nonempty(verb, args[0])? }
        }
        "open_app" => {
            arity(verb, args, "1", n == 1)?;
            Action::OpenApp { app_name: nonempty(verb, args[0])? }
        }
        "stop" => {
            arity(verb, args, "0 or 1", n <= 1)?;
            Action::Stop { answer: args.first().map(|s| s.to_string()) }
        }
        "go_forward" | "go_back" | "new_tab" | "close_tab" | "keyboard_enter" | "navigate_back"
        | "navigate_home" | "wait" => {
            arity(verb, args, "0", n == 0)?;
            match verb {
                "go_forward" => Action::GoForward,
                "go_back" => Action::GoBack,
                "new_tab" => Action::NewTab,
                "close_tab" => Action::CloseTab,
                "keyboard_enter" => Action::KeyboardEnter,
                "navigate_back" => Action::NavigateBack,
                "navigate_home" => Action::NavigateHome,
                _ => Action::Wait,
            }
        }
        _ => unreachable!("verb checked by caller"),
    };
    Ok(action)
}

/// Normalizes verb spellings seen in the wild to the canonical one.
fn canonical_verb(verb: &str) -> &str {
    match verb {
        // misspelling carried by the published AndroidWorld action table
        "keyborad_enter" => "keyboard_enter",
        v => v,
    }
}

/// Parses an action in the given domain's action space.
pub fn parse_action(text: &str, domain: Domain) -> Result<Action, ActionParseError> {
    let (verb, args) = split(text)?;
    let verb = canonical_verb(verb);
    if !verbs(domain).contains(&verb) {
        return Err(ActionParseError::UnknownVerb { verb: verb.to_string(), domain });
    }
    build(verb, &args)
}

fn parse_any(text: &str) -> Result<Action, ActionParseError> {
    let (verb, args) = split(text)?;
    let verb = canonical_verb(verb);
    if !WEB_VERBS.contains(&verb) && !MOBILE_VERBS.contains(&verb) {
        return Err(ActionParseError::UnknownVerb { verb: verb.to_string(), domain: Domain::Web });
    }
    build(verb, &args)
}

const MENTION_MARKER: &str = "next action i will perform is";

/// Action text following the last "next action I will perform is" marker.
///
/// Matching is case-insensitive; surrounding whitespace, backticks and a
/// trailing period are trimmed.
pub fn extract_action_mention(thought: &str) -> Option<String> {
    let lower = thought.to_ascii_lowercase();
    let at = lower.rfind(MENTION_MARKER)?;
    let tail = thought[at + MENTION_MARKER.len()..].trim();
    let tail = tail.strip_suffix('.').unwrap_or(tail).trim();
    let tail = tail.trim_matches('`').trim();
    if tail.is_empty() {
        None
    } else {
        Some(tail.to_string())
    }
}

/// One recorded rollout step: the reasoning, the action and its one-line summary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryStep {
    pub thought: String,
    pub action: Action,
    pub summary: String,
}

/// Append-only action history; index equals timestep.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionHistory {
    steps: Vec<HistoryStep>,
}

impl ActionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, thought: impl Into<String>, action: Action, summary: impl Into<String>) {
        self.steps.push(HistoryStep { thought: thought.into(), action, summary: summary.into() });
    }

    pub fn steps(&self) -> &[HistoryStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `1. click [3]: Open the orders page` lines; the form used as a
    /// retrieval query and in prompts. Empty history renders as `None`.
    pub fn render(&self) -> String {
        if self.steps.is_empty() {
            return "None".to_string();
        }
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&alloc::format!("{}. {}: {}", i + 1, render_action(&s.action), s.summary));
        }
        out
    }
}

impl FromIterator<HistoryStep> for ActionHistory {
    fn from_iter<I: IntoIterator<Item = HistoryStep>>(iter: I) -> Self {
        Self { steps: iter.into_iter().collect() }
    }
}
