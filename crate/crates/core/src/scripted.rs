//! A deterministic stand-in for every chat role.
//!
//! [`ScriptedLlm`] reads the rendered prompt, recognizes the template by id,
//! pulls what it needs out of the `<tag>` blocks and answers in the format the
//! template asks for. Page content comes from small word lists indexed by
//! hashes of the prompt, so a run is a pure function of its inputs while still
//! producing varied pages, tasks and trajectories. Entity names have the form
//! `<adjective> <noun>`; [`swap_entities`] maps each to a sibling entity, which
//! is what the variant and reference-guided replies rely on.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::axtree::{parse_element_line, parse_mobile_elements, parse_web_tree, py_repr, Domain, UiState};
use crate::client::mock::fnv1a64;
use crate::client::{ChatClient, ModelError, Prompt};
use crate::prompt::{sections, tagged};
use crate::rollout::Site;

pub const ADJECTIVES: [&str; 16] = [
    "Amber", "Brisk", "Cedar", "Dusky", "Ember", "Frost", "Golden", "Hollow", "Ivory", "Jade", "Lunar", "Maple",
    "Nimble", "Opal", "Quiet", "Rustic",
];

pub const NOUNS: [&str; 16] = [
    "Lantern", "Kettle", "Harbor", "Meadow", "Satchel", "Beacon", "Compass", "Orchard", "Quill", "Ridge", "Thimble",
    "Anchor", "Canyon", "Falcon", "Garnet", "Willow",
];

fn entity(h: u64) -> String {
    alloc::format!("{} {}", ADJECTIVES[(h % 16) as usize], NOUNS[((h / 16) % 16) as usize])
}

fn hash(parts: &[&str]) -> u64 {
    let mut s = String::new();
    for p in parts {
        s.push_str(p);
        s.push('\u{1f}');
    }
    fnv1a64(s.as_bytes())
}

/// Replaces every `<adjective> <noun>` pair with a fixed sibling pair.
pub fn swap_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'outer: while !rest.is_empty() {
        for (ai, a) in ADJECTIVES.iter().enumerate() {
            if let Some(after) = rest.strip_prefix(a).and_then(|r| r.strip_prefix(' ')) {
                let boundary = out.chars().next_back().is_none_or(|c| !c.is_alphanumeric());
                if !boundary {
                    continue;
                }
                for (ni, n) in NOUNS.iter().enumerate() {
                    if let Some(tail) = after.strip_prefix(n) {
                        if tail.chars().next().is_none_or(|c| !c.is_alphanumeric()) {
                            out.push_str(ADJECTIVES[(ai + 5) % 16]);
                            out.push(' ');
                            out.push_str(NOUNS[(ni + 7) % 16]);
                            rest = tail;
                            continue 'outer;
                        }
                    }
                }
            }
        }
        let c = rest.chars().next().expect("rest is nonempty");
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// One visible element as the scripted roles see it.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Seen {
    id: u32,
    role: String,
    content: String,
    clickable: bool,
    editable: bool,
}

const WEB_CLICKABLE: &[&str] = &["link", "button", "menuitem", "tab", "checkbox", "combobox"];
const WEB_EDITABLE: &[&str] = &["textbox", "searchbox"];

fn seen_elements(observation: &str) -> (Domain, Vec<Seen>) {
    let mobile = observation.trim_start().starts_with("Element ");
    let mut out = Vec::new();
    for line in observation.lines() {
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        if mobile {
            let Ok(e) = parse_element_line(Domain::Mobile, body) else { continue };
            let flag = |k: &str| e.attributes.get(k) == Some("True");
            let content = e.content.clone().or_else(|| e.attributes.get("content_description").map(str::to_string));
            out.push(Seen {
                id: e.id.0,
                role: e.role.clone(),
                content: content.unwrap_or_default(),
                clickable: flag("is_clickable"),
                editable: flag("is_editable"),
            });
        } else if let Ok(e) = parse_element_line(Domain::Web, body) {
            out.push(Seen {
                id: e.id.0,
                role: e.role.clone(),
                content: e.content_str().to_string(),
                clickable: WEB_CLICKABLE.contains(&e.role.as_str()),
                editable: WEB_EDITABLE.contains(&e.role.as_str()),
            });
        }
    }
    (if mobile { Domain::Mobile } else { Domain::Web }, out)
}

fn first_quoted(text: &str) -> Option<String> {
    let start = text.find('\'')?;
    let rest = &text[start + 1..];
    let end = rest.find('\'')?;
    let q = &rest[..end];
    (!q.is_empty()).then(|| q.to_string())
}

/// `N. action: summary` lines of a rendered history.
fn history_lines(history: &str) -> Vec<(String, String)> {
    history
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let dot = l.find(". ")?;
            l[..dot].parse::<usize>().ok()?;
            let body = &l[dot + 2..];
            Some(match split_action_summary(body) {
                Some((a, s)) => (a.to_string(), s.to_string()),
                None => (body.to_string(), String::new()),
            })
        })
        .collect()
}

/// Splits `action: summary` at the first `: ` outside brackets.
fn split_action_summary(body: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in body.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ':' if depth == 0 && body[i + 1..].starts_with(' ') => return Some((&body[..i], &body[i + 2..])),
            _ => {}
        }
    }
    None
}

fn numbered_items(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim();
            let dot = l.find(". ")?;
            l[..dot].parse::<usize>().ok()?;
            Some(l[dot + 2..].to_string())
        })
        .collect()
}

/// Scripted teacher, world model, summarizer and reranker in one client.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedLlm {
    pub salt: u64,
}

impl ScriptedLlm {
    pub fn new(salt: u64) -> Self {
        Self { salt }
    }

    fn h(&self, parts: &[&str]) -> u64 {
        hash(parts) ^ self.salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    fn reply(&self, name: &str, domain_hint: Option<Domain>, p: &Prompt) -> Result<String, ModelError> {
        let user = &p.user;
        let tag = |t: &str| tagged(user, t).unwrap_or("").trim().to_string();
        let domain = domain_hint.unwrap_or(Domain::Web);
        Ok(match name {
            "propose_first" | "propose_next" => self.propose(&tag("observation"), &p.system),
            "check_done" => {
                let control = tag("control");
                let steps = history_lines(&tag("history")).len();
                let need = 1 + (self.h(&[&control]) % 2) as usize;
                let done = steps >= need;
                alloc::format!(
                    "Thought: {steps} step(s) were taken for this direction.\nAnswer: {}",
                    if done { "Yes" } else { "No" }
                )
            }
            "step" => self.step(domain, &tag("control"), &tag("history"), &tag("observation")),
            "overview" => self.overview(&tag("action"), &tag("observation")),
            "draft" => self.draft(domain, &tag("overview")),
            "draft_rag" => self.draft_from_reference(&tag("reference"), &tag("overview")),
            "structure" | "structure_repair" => structure(domain, &tag("draft"), &p.system),
            "fused" => {
                let overview = self.overview(&tag("action"), &tag("observation"));
                let window = sections(&overview, &["Thought", "New window", "Key Info", "Answer"]);
                let draft = self.draft(domain, window.get("New window").map_or("", String::as_str));
                let state = structure(domain, &draft, &p.system);
                alloc::format!("{overview}\nState:\n{state}")
            }
            "summarize" => summarize(&tag("steps")),
            "rewrite" => rewrite(&tag("task"), &tag("steps")),
            "reasoning" => self.reasoning(&tag("observation")),
            "rerank" => {
                let n = tag("candidates").lines().filter(|l| l.starts_with("Candidate ")).count();
                let k: usize = p.system.split_whitespace().find_map(|w| w.parse().ok()).unwrap_or(n);
                let ranks: Vec<String> = (1..=n.min(k)).map(|i| i.to_string()).collect();
                alloc::format!("Thought: keeping retrieval order.\nRanking: {}", ranks.join(", "))
            }
            "variant" => variant(&tag("task"), &tag("history"), &tag("actions")),
            other => return Err(ModelError::Unsupported(alloc::format!("scripted client has no reply for `{other}`"))),
        })
    }

    fn propose(&self, observation: &str, system: &str) -> String {
        let (_, seen) = seen_elements(observation);
        let max: usize = system.split_whitespace().find_map(|w| w.parse().ok()).unwrap_or(3);
        let mut items: Vec<String> = Vec::new();
        for e in &seen {
            if e.content.is_empty() {
                continue;
            }
            let item = if e.editable {
                alloc::format!("Search using {}", py_repr(&e.content))
            } else if e.clickable {
                alloc::format!("Open {}", py_repr(&e.content))
            } else {
                continue;
            };
            if !items.contains(&item) {
                items.push(item);
            }
        }
        if items.is_empty() {
            return "Thought: nothing on this page can be used.\nTask controls:".to_string();
        }
        let shift = (self.h(&[observation]) as usize) % items.len();
        items.rotate_left(shift);
        items.truncate(max.max(1));
        let list: Vec<String> = items.iter().map(|i| alloc::format!("- {i}")).collect();
        alloc::format!("Thought: the page offers {} usable elements.\nTask controls:\n{}", seen.len(), list.join("\n"))
    }

    fn step(&self, domain: Domain, control: &str, history: &str, observation: &str) -> String {
        let done = history_lines(history);
        let stop_after = 2 + (self.h(&[control]) % 3) as usize;
        let (_, seen) = seen_elements(observation);
        let used: Vec<String> = done.iter().filter_map(|(_, s)| first_quoted(s)).collect();
        let wanted = first_quoted(control);
        let usable = |e: &&Seen| (e.clickable || e.editable) && !e.content.is_empty() && !used.contains(&e.content);
        let pick = seen
            .iter()
            .filter(usable)
            .find(|e| wanted.as_deref() == Some(e.content.as_str()))
            .or_else(|| seen.iter().find(usable));
        let Some(target) = pick.filter(|_| done.len() < stop_after) else {
            return alloc::format!(
                "Thought: The direction \"{control}\" has been followed far enough. In summary, the next action I will perform is stop\nAction: stop\nTask: Finish the task."
            );
        };
        let (action, summary) = if target.editable {
            let query = entity(self.h(&[control, &target.content]));
            let action = match domain {
                Domain::Web => alloc::format!("type [{}] [{}] [1]", target.id, query),
                Domain::Mobile => alloc::format!("input_text [{}][{}]", target.id, query),
            };
            (action, alloc::format!("Search for {} in {}.", py_repr(&query), py_repr(&target.content)))
        } else {
            (alloc::format!("click [{}]", target.id), alloc::format!("Open {}.", py_repr(&target.content)))
        };
        alloc::format!(
            "Thought: The direction is \"{control}\" and the page shows {} {}. In summary, the next action I will perform is {action}\nAction: {action}\nTask: {summary}",
            target.role,
            py_repr(&target.content)
        )
    }

    fn overview(&self, action: &str, observation: &str) -> String {
        let (_, seen) = seen_elements(observation);
        let target_id = action.split(['[', ']']).nth(1).and_then(|s| s.trim().parse::<u32>().ok());
        let target = target_id.and_then(|id| seen.iter().find(|e| e.id == id));
        let typed = action.split('[').nth(2).map(|s| s.trim_end_matches([']', ' ']).to_string());
        let subject = match (action.split([' ', '[']).next(), typed, target) {
            (Some("type") | Some("input_text"), Some(q), _) if !q.is_empty() => alloc::format!("Results for {q}"),
            (_, _, Some(t)) if !t.content.is_empty() => t.content.clone(),
            _ => entity(self.h(&[action, observation])),
        };
        alloc::format!(
            "Thought: the action {action} leads to a page about {}.\nNew window: The page for {} with related items.\nKey Info: The user opened {}.\nAnswer: Yes",
            py_repr(&subject),
            py_repr(&subject),
            py_repr(&subject)
        )
    }

    fn draft(&self, domain: Domain, overview: &str) -> String {
        let title = first_quoted(overview).unwrap_or_else(|| entity(self.h(&[overview])));
        let h = self.h(&[&title]);
        let price = alloc::format!("${}.{:02}", 5 + h % 195, (h / 200) % 100);
        let related: Vec<String> = (0..3).map(|i| entity(self.h(&[&title, &i.to_string()]))).collect();
        let mut lines = alloc::vec![alloc::format!("Page: {title}")];
        match domain {
            Domain::Web => {
                lines.push("Section: Header".into());
                lines.push("  link 'Home'".into());
                lines.push("  textbox 'Search'".into());
                lines.push(alloc::format!("Section: {title}"));
                lines.push(alloc::format!("  heading {}", py_repr(&title)));
                lines.push(alloc::format!("  StaticText 'Price: {price}'"));
                for r in &related {
                    lines.push(alloc::format!("  link {}", py_repr(r)));
                }
            }
            Domain::Mobile => {
                lines.push(alloc::format!("TextView {}", py_repr(&title)));
                lines.push(alloc::format!("TextView 'Price: {price}'"));
                for r in &related {
                    lines.push(alloc::format!("Button {}", py_repr(r)));
                }
                lines.push("EditText 'Search'".into());
            }
        }
        lines.join("\n")
    }

    /// Reproduces the reference layout with entity names swapped.
    fn draft_from_reference(&self, reference: &str, overview: &str) -> String {
        let state = parse_web_tree(reference).or_else(|_| parse_mobile_elements(reference));
        let Ok(state) = state else {
            let domain = if reference.trim_start().starts_with("Element ") { Domain::Mobile } else { Domain::Web };
            return self.draft(domain, overview);
        };
        let mut lines = Vec::new();
        match state.domain() {
            Domain::Web => {
                lines.push(alloc::format!("Page: {}", swap_entities(state.root().content_str())));
                if let Some(url) = state.root().attributes.get("url") {
                    lines.push(alloc::format!("Url: {url}"));
                }
                for (id, depth) in state.walk().into_iter().skip(1) {
                    let e = state.get(id).expect("walked ids exist");
                    let indent = "  ".repeat(depth - 1);
                    lines.push(alloc::format!("{indent}{} {}", e.role, py_repr(&swap_entities(e.content_str()))));
                }
            }
            Domain::Mobile => {
                lines.push("Page: screen".to_string());
                if let Some(pkg) = state.elements().find_map(|e| e.attributes.get("package_name")) {
                    lines.push(alloc::format!("Package: {pkg}"));
                }
                for id in state.document_order().into_iter().filter(|i| *i != state.root_id()) {
                    let e = state.get(id).expect("ordered ids exist");
                    let label = e.content.clone().or_else(|| e.attributes.get("content_description").map(str::to_string));
                    lines.push(alloc::format!("{} {}", e.role, py_repr(&swap_entities(&label.unwrap_or_default()))));
                }
            }
        }
        lines.join("\n")
    }

    fn reasoning(&self, observation: &str) -> String {
        let (_, seen) = seen_elements(observation);
        let price = seen.iter().find_map(|e| e.content.strip_prefix("Price: ").map(str::to_string));
        let title = seen
            .iter()
            .find(|e| e.role == "heading" || e.role == "RootWebArea" || e.role.ends_with("TextView"))
            .map(|e| e.content.clone());
        match (price, title) {
            (Some(p), Some(t)) if self.h(&[observation]) % 2 == 0 => alloc::format!(
                "Thought: the page lists a price.\nAnswer: Yes\nQuestion: What is the price of {}?\nSolution: {p}",
                py_repr(&t)
            ),
            _ => "Thought: nothing here is worth a quiz question.\nAnswer: No".to_string(),
        }
    }
}

fn mobile_class(kind: &str) -> String {
    if kind.contains('.') {
        kind.to_string()
    } else {
        alloc::format!("android.widget.{kind}")
    }
}

/// Turns a draft (`Page:` line, optional `Url:`/`Package:` lines, then
/// `<indent>kind 'content'` items or `Section: heading` lines) into the
/// domain's state text.
fn structure(domain: Domain, draft: &str, system: &str) -> String {
    let floor: u32 = system
        .split("starting at ")
        .nth(1)
        .and_then(|s| s.split(|c: char| !c.is_ascii_digit()).next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let mut title = String::from("Untitled");
    let mut url = None;
    let mut package = String::from("com.example.app");
    let mut items: Vec<(usize, String, String)> = Vec::new();
    for raw in draft.lines() {
        if raw.trim().is_empty() {
            continue;
        }
        let body = raw.trim_start();
        let level = (raw.len() - body.len()) / 2;
        if let Some(t) = body.strip_prefix("Page: ") {
            title = t.trim().to_string();
        } else if let Some(u) = body.strip_prefix("Url: ") {
            url = Some(u.trim().to_string());
        } else if let Some(p) = body.strip_prefix("Package: ") {
            package = p.trim().to_string();
        } else if let Some(h) = body.strip_prefix("Section: ") {
            items.push((level, "section".into(), h.trim().to_string()));
        } else if let Some((kind, rest)) = body.split_once(' ') {
            let content = crate::axtree::py_unquote(rest.trim()).map(|(s, _)| s).unwrap_or_else(|| rest.trim().to_string());
            items.push((level, kind.to_string(), content));
        }
    }
    let mut out = Vec::new();
    match domain {
        Domain::Web => {
            let url = url.unwrap_or_else(|| alloc::format!("http://site.local/{}", title.to_lowercase().replace(' ', "-")));
            out.push(alloc::format!("[{floor}] RootWebArea {} url: {url}", py_repr(&title)));
            // depth of the most recent item at each level, for clamping jumps
            let mut last_depth = 0usize;
            for (i, (level, kind, content)) in items.iter().enumerate() {
                let depth = (*level + 1).min(last_depth + 1);
                last_depth = depth;
                out.push(alloc::format!("{}[{}] {kind} {}", "\t".repeat(depth), floor + 1 + i as u32, py_repr(content)));
            }
        }
        Domain::Mobile => {
            for (i, (_, kind, content)) in items.iter().enumerate() {
                let class = mobile_class(if kind == "section" { "TextView" } else { kind });
                let editable = class.ends_with("EditText");
                let clickable = editable || class.ends_with("Button") || class.ends_with("Switch") || class.ends_with("CheckBox");
                let py = |b: bool| if b { "True" } else { "False" };
                let (text, desc) = if content.is_empty() { ("None".to_string(), "None".to_string()) } else { (content.clone(), "None".to_string()) };
                out.push(alloc::format!(
                    "Element {}: UIElement(text={text}, content_description={desc}, class_name={class}, is_clickable={}, is_editable={}, package_name={package})",
                    floor + i as u32,
                    py(clickable),
                    py(editable)
                ));
            }
        }
    }
    out.join("\n")
}

fn sentence_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

fn summarize(steps: &str) -> String {
    let parts: Vec<String> = history_lines(steps)
        .into_iter()
        .filter(|(a, _)| !a.starts_with("stop"))
        .map(|(_, s)| s.trim().trim_end_matches('.').to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if parts.is_empty() {
        return "Thought: the agent did nothing.\nTask: Look around the start page.".to_string();
    }
    let joined: Vec<String> = parts.iter().enumerate().map(|(i, p)| if i == 0 { p.clone() } else { lower_first(p) }).collect();
    alloc::format!("Thought: the steps form one task.\nTask: {}.", sentence_case(&joined.join(", then ")))
}

fn rewrite(instruction: &str, steps: &str) -> String {
    let mut out = Vec::new();
    for block in steps.split("Step ").filter(|b| !b.trim().is_empty()) {
        let mut action = "";
        let mut summary = "";
        for line in block.lines() {
            if let Some(a) = line.strip_prefix("Action: ") {
                action = a.trim();
            } else if let Some(s) = line.strip_prefix("Summary: ") {
                summary = s.trim().trim_end_matches('.');
            }
        }
        let n = out.len() + 1;
        let goal = instruction.trim().trim_end_matches(['.', '?']);
        let doing = if summary.is_empty() { "continue".to_string() } else { lower_first(summary) };
        out.push(alloc::format!(
            "Thought {n}: The task is \"{goal}\", so I {doing}. In summary, the next action I will perform is {action}"
        ));
    }
    out.join("\n")
}

fn variant(instruction: &str, history: &str, actions: &str) -> String {
    let summaries: Vec<String> = history_lines(history).into_iter().map(|(_, s)| swap_entities(&s)).collect();
    let acts: Vec<String> = numbered_items(actions).iter().map(|a| swap_entities(a)).collect();
    let mut out = alloc::format!("Task: {}\nNew browsing history:\n", swap_entities(instruction));
    for (i, s) in summaries.iter().enumerate() {
        out.push_str(&alloc::format!("{}. {s}\n", i + 1));
    }
    out.push_str("New actions:\n");
    for (i, a) in acts.iter().enumerate() {
        out.push_str(&alloc::format!("{}. {a}\n", i + 1));
    }
    out
}

impl ChatClient for ScriptedLlm {
    fn complete(&self, prompt: &Prompt) -> Result<String, ModelError> {
        let (scope, name) = prompt.template_id.split_once('/').unwrap_or(("common", prompt.template_id.as_str()));
        let domain = match scope {
            "web" => Some(Domain::Web),
            "mobile" => Some(Domain::Mobile),
            _ => {
                let text = &prompt.user;
                if text.contains("Element ") && text.contains("UIElement(") {
                    Some(Domain::Mobile)
                } else {
                    Some(Domain::Web)
                }
            }
        };
        self.reply(name, domain, prompt)
    }
}

/// Start page of `site`, varied by `index`.
pub fn seed_state(site: Site, index: usize) -> UiState {
    let h = hash(&[site.as_str(), &index.to_string()]);
    let items: Vec<String> = (0..5).map(|i| entity(hash(&[site.as_str(), &index.to_string(), &i.to_string()]))).collect();
    let (title, section) = match site {
        Site::Shopping => ("Corner Market", "Featured products"),
        Site::Gitlab => ("Code Forge", "Projects"),
        Site::Map => ("Open Atlas", "Nearby places"),
        Site::Reddit => ("Forum Square", "Popular threads"),
        Site::ShoppingAdmin => ("Store Admin", "Recent orders"),
        Site::Android => ("Launcher", "Apps"),
    };
    let text = match site.domain() {
        Domain::Web => {
            let mut lines = alloc::vec![
                alloc::format!("[1] RootWebArea '{title}' url: http://{}.local/{index}", site.as_str()),
                "\t[2] section 'Header'".to_string(),
                "\t\t[3] link 'Home'".to_string(),
                "\t\t[4] textbox 'Search'".to_string(),
                alloc::format!("\t[5] section '{section}'"),
            ];
            for (i, it) in items.iter().enumerate() {
                lines.push(alloc::format!("\t\t[{}] link {}", 6 + i, py_repr(it)));
            }
            lines.push(alloc::format!("\t\t[11] StaticText 'Price: ${}.{:02}'", 3 + h % 90, h % 100));
            lines.join("\n")
        }
        Domain::Mobile => {
            let pkg = "com.example.launcher";
            let mut lines = alloc::vec![alloc::format!(
                "Element 0: UIElement(text={section}, content_description=None, class_name=android.widget.TextView, is_clickable=False, is_editable=False, package_name={pkg})"
            )];
            for (i, it) in items.iter().enumerate() {
                lines.push(alloc::format!(
                    "Element {}: UIElement(text={it}, content_description=None, class_name=android.widget.Button, is_clickable=True, is_editable=False, package_name={pkg})",
                    i + 1
                ));
            }
            lines.push(alloc::format!(
                "Element 6: UIElement(text=Search, content_description=None, class_name=android.widget.EditText, is_clickable=True, is_editable=True, package_name={pkg})"
            ));
            lines.join("\n")
        }
    };
    let state = UiState::parse(site.domain(), &text).expect("seed pages are well formed");
    crate::simulator::assign_coordinates(&state, &crate::transition::Viewport::for_domain(site.domain()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_is_entity_only() {
        assert_eq!(swap_entities("Open 'Amber Lantern' now"), "Open 'Frost Orchard' now");
        assert_eq!(swap_entities("Home"), "Home");
        assert_eq!(swap_entities("XAmber Lantern"), "XAmber Lantern");
    }

    #[test]
    fn history_split_respects_brackets() {
        let h = history_lines("1. type [4] [a: b] [1]: Search for 'a: b'.\n2. stop: Finish.");
        assert_eq!(h[0], ("type [4] [a: b] [1]".to_string(), "Search for 'a: b'.".to_string()));
        assert_eq!(h[1].0, "stop");
    }

    #[test]
    fn seeds_parse_for_every_site() {
        for site in Site::ALL {
            let s = seed_state(site, 3);
            assert_eq!(s.domain(), site.domain());
            assert!(s.len() >= 7);
        }
    }
}
