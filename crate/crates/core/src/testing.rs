//! Seeded generators for property tests, benchmarks and fixtures.
//!
//! Everything here draws from a caller-supplied RNG, so a `u64` seed fully
//! determines the output.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::actions::{Action, ActionHistory, Direction};
use crate::axtree::{BoundingBox, Domain, ElementId, UiElement, UiState, MOBILE_ROOT_ID, MOBILE_STANDARD_FIELDS};
use crate::retrieval::TransitionRecord;
use crate::transition::observe;
use crate::transition::Viewport;

const WEB_ROLES: &[&str] = &[
    "link", "button", "textbox", "StaticText", "heading", "image", "checkbox", "combobox", "listitem", "section",
    "main", "navigation", "menuitem", "gridcell", "row",
];
const MOBILE_CLASSES: &[&str] = &[
    "android.widget.TextView",
    "android.widget.Button",
    "android.widget.EditText",
    "android.widget.ImageButton",
    "android.widget.Switch",
    "android.view.View",
    "android.widget.FrameLayout",
];
const WORDS: &[&str] = &[
    "order", "cart", "issue", "merge", "review", "search", "map", "route", "post", "comment", "alarm", "contact",
    "price", "total", "account", "settings", "profile", "repository", "branch", "city", "museum", "invoice",
];

/// Text over a deliberately awkward alphabet: quotes, backslashes, brackets,
/// control characters and non-ASCII letters.
pub fn awkward_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    const POOL: &[char] = &[
        'a', 'b', 'Z', '0', '7', ' ', ' ', '\'', '"', '\\', '[', '(', ')', ',', ':', '=', '-', '$', 'é', 'ß', '中', '\n',
        '\t', '\u{1}',
    ];
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

/// Space-separated words, never empty.
pub fn words<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words.max(1));
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn bbox<R: Rng>(rng: &mut R, vp: &Viewport) -> BoundingBox {
    let x0 = rng.random_range(0..vp.width);
    let x1 = rng.random_range(x0..=vp.width);
    let y0 = rng.random_range(0..vp.height * 3);
    let y1 = rng.random_range(y0..=y0 + 400);
    BoundingBox::new(x0, x1, y0, y1).expect("ordered corners")
}

fn distinct_ids<R: Rng>(rng: &mut R, n: usize) -> Vec<u32> {
    let mut ids = Vec::with_capacity(n);
    let mut next: u32 = rng.random_range(0..50);
    for _ in 0..n {
        ids.push(next);
        next += rng.random_range(1..4);
    }
    // shuffle so ids are not in document order
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    ids
}

/// Web tree with up to `max_elements` elements, awkward content and
/// attributes.
pub fn random_web_state<R: Rng>(rng: &mut R, max_elements: usize) -> UiState {
    let n = rng.random_range(1..=max_elements.max(1));
    let ids = distinct_ids(rng, n);
    let vp = Viewport::web();
    let mut els: Vec<UiElement> = Vec::with_capacity(n);
    for (i, &id) in ids.iter().enumerate() {
        let role = if i == 0 { "RootWebArea" } else { WEB_ROLES[rng.random_range(0..WEB_ROLES.len())] };
        let mut e = UiElement::new(id, role);
        if rng.random_bool(0.85) {
            e.content = Some(awkward_text(rng, 12));
        }
        if rng.random_bool(0.7) {
            e.bbox = Some(bbox(rng, &vp));
        }
        let n_attr = rng.random_range(0..3);
        for k in 0..n_attr {
            let key = ["focused", "required", "url", "level", "expanded", "data-x"][(k * 2 + rng.random_range(0..2)) % 6];
            let value = match rng.random_range(0..3) {
                0 => "True".to_string(),
                1 => rng.random_range(0..100u32).to_string(),
                _ => words(rng, 3),
            };
            e.attributes.insert(key, value);
        }
        if i > 0 {
            let parent = rng.random_range(0..i);
            els[parent].children.push(ElementId(id));
        }
        els.push(e);
    }
    let root = ElementId(ids[0]);
    UiState::new(Domain::Web, root, els).expect("generated tree is valid")
}

/// Mobile element list with up to `max_elements` elements.
pub fn random_mobile_state<R: Rng>(rng: &mut R, max_elements: usize) -> UiState {
    let n = rng.random_range(1..=max_elements.max(1));
    let mut ids = distinct_ids(rng, n);
    ids.retain(|i| *i != MOBILE_ROOT_ID.0);
    let vp = Viewport::mobile();
    let mut root = UiElement::new(MOBILE_ROOT_ID.0, crate::axtree::MOBILE_ROOT_ROLE);
    let mut els = Vec::with_capacity(n + 1);
    let value = |rng: &mut R| -> String {
        let w = words(rng, 3);
        if rng.random_bool(0.3) {
            alloc::format!("{w}, {}", words(rng, 1))
        } else {
            w
        }
    };
    for &id in &ids {
        let mut e = UiElement::new(id, MOBILE_CLASSES[rng.random_range(0..MOBILE_CLASSES.len())]);
        if rng.random_bool(0.7) {
            e.content = Some(value(rng));
        }
        if rng.random_bool(0.8) {
            e.bbox = Some(bbox(rng, &vp));
        }
        for key in MOBILE_STANDARD_FIELDS {
            match *key {
                "text" | "class_name" | "bbox_pixels" => {}
                "content_description" | "resource_name" | "package_name" if rng.random_bool(0.5) => {
                    e.attributes.insert(*key, value(rng));
                }
                k if k.starts_with("is_") && rng.random_bool(0.5) => {
                    e.attributes.insert(*key, if rng.random_bool(0.5) { "True" } else { "False" });
                }
                _ => {}
            }
        }
        if rng.random_bool(0.2) {
            e.attributes.insert("extra_note", value(rng));
        }
        root.children.push(ElementId(id));
        els.push(e);
    }
    els.push(root);
    UiState::new(Domain::Mobile, MOBILE_ROOT_ID, els).expect("generated list is valid")
}

pub fn random_state<R: Rng>(rng: &mut R, domain: Domain, max_elements: usize) -> UiState {
    match domain {
        Domain::Web => random_web_state(rng, max_elements),
        Domain::Mobile => random_mobile_state(rng, max_elements),
    }
}

/// Text that survives inside a bracketed action argument.
fn arg_text<R: Rng>(rng: &mut R, nonempty: bool) -> String {
    loop {
        let t: String = awkward_text(rng, 10).chars().filter(|c| *c != ']' && *c != '\n').collect();
        let t = if rng.random_bool(0.5) { t } else { words(rng, 3) };
        if !nonempty || !t.is_empty() {
            return t;
        }
    }
}

/// Any action of the domain's action space.
pub fn random_action<R: Rng>(rng: &mut R, domain: Domain, max_id: u32) -> Action {
    let id = |rng: &mut R| ElementId(rng.random_range(0..=max_id));
    let dir = |rng: &mut R| Direction::ALL[rng.random_range(0..4)];
    match domain {
        Domain::Web => match rng.random_range(0..12) {
            0 => Action::Click { id: id(rng) },
            1 => Action::Type { id: id(rng), text: arg_text(rng, false), press_enter: rng.random_bool(0.5) },
            2 => Action::Hover { id: id(rng) },
            3 => Action::Press { key_comb: ["Enter", "Ctrl+a", "Meta+Shift+k", "PageDown"][rng.random_range(0..4)].to_string() },
            4 => Action::Scroll { direction: dir(rng) },
            5 => Action::GoForward,
            6 => Action::GoBack,
            7 => Action::NewTab,
            8 => Action::TabFocus { index: rng.random_range(0..5) },
            9 => Action::CloseTab,
            10 => Action::Goto { url: alloc::format!("http://{}.local/{}", words(rng, 1), rng.random_range(0..999)) },
            _ => Action::Stop { answer: rng.random_bool(0.5).then(|| arg_text(rng, false)) },
        },
        Domain::Mobile => match rng.random_range(0..9) {
            0 => Action::Click { id: id(rng) },
            1 => Action::OpenApp { app_name: arg_text(rng, true) },
            2 => Action::InputText { id: id(rng), text: arg_text(rng, false) },
            3 => Action::KeyboardEnter,
            4 => Action::Scroll { direction: dir(rng) },
            5 => Action::NavigateBack,
            6 => Action::NavigateHome,
            7 => Action::Wait,
            _ => Action::Stop { answer: rng.random_bool(0.5).then(|| arg_text(rng, false)) },
        },
    }
}

/// History of `len` random actions with short summaries.
pub fn random_history<R: Rng>(rng: &mut R, domain: Domain, len: usize, max_id: u32) -> ActionHistory {
    let mut h = ActionHistory::new();
    for _ in 0..len {
        let a = random_action(rng, domain, max_id);
        h.push(words(rng, 6), a, words(rng, 8));
    }
    h
}

/// Transition corpus of `n` records with realistic-looking text.
pub fn random_corpus<R: Rng>(rng: &mut R, domain: Domain, n: usize) -> Vec<TransitionRecord> {
    let vp = Viewport::for_domain(domain);
    (0..n)
        .map(|_| {
            let before = random_state(rng, domain, 12);
            let after = random_state(rng, domain, 12);
            let len = rng.random_range(1..6);
            TransitionRecord {
                obs_before: observe(&before, &vp).rendered_text,
                history: random_history(rng, domain, len, 60),
                obs_after: observe(&after, &vp).rendered_text,
                state_before: before,
                state_after: after,
                domain,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_are_seeded() {
        let a = random_web_state(&mut ChaCha8Rng::seed_from_u64(3), 20);
        let b = random_web_state(&mut ChaCha8Rng::seed_from_u64(3), 20);
        assert_eq!(a, b);
        let c = random_corpus(&mut ChaCha8Rng::seed_from_u64(1), Domain::Mobile, 3);
        assert!(c.iter().all(|r| r.validate().is_ok()));
    }
}
