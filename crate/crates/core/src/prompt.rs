//! Prompt templates and response sections.
//!
//! A template file has two parts introduced by `=== system` and `=== user`
//! lines; `{{slot}}` placeholders are filled at render time. Templates are
//! addressed as `<domain>/<name>` with a fallback to `common/<name>`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::axtree::Domain;
use crate::client::Prompt;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no template named {0}")]
    UnknownTemplate(String),
    #[error("template {id}: {reason}")]
    BadTemplate { id: String, reason: String },
    #[error("template {id} needs slot `{slot}`")]
    MissingSlot { id: String, slot: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub system: String,
    pub user: String,
}

impl Template {
    pub fn parse(id: &str, text: &str) -> Result<Self, PromptError> {
        let bad = |reason: &str| PromptError::BadTemplate { id: id.to_string(), reason: reason.to_string() };
        let text = text.replace("\r\n", "\n");
        let rest = text.strip_prefix("=== system\n").ok_or_else(|| bad("must start with `=== system`"))?;
        let (system, user) = rest.split_once("\n=== user\n").ok_or_else(|| bad("missing `=== user` line"))?;
        let t = Self { id: id.to_string(), system: system.to_string(), user: user.trim_end_matches('\n').to_string() };
        for part in [&t.system, &t.user] {
            scan_slots(part).map_err(|()| bad("unterminated `{{`"))?;
        }
        Ok(t)
    }

    /// Slot names used by the template, sorted and deduplicated.
    pub fn slots(&self) -> Vec<String> {
        let mut out: Vec<String> = scan_slots(&self.system)
            .unwrap_or_default()
            .into_iter()
            .chain(scan_slots(&self.user).unwrap_or_default())
            .map(str::to_string)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn render(&self, slots: &[(&str, &str)]) -> Result<Prompt, PromptError> {
        Ok(Prompt {
            template_id: self.id.clone(),
            system: fill(&self.id, &self.system, slots)?,
            user: fill(&self.id, &self.user, slots)?,
        })
    }
}

fn scan_slots(text: &str) -> Result<Vec<&str>, ()> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(())?;
        out.push(after[..end].trim());
        rest = &after[end + 2..];
    }
    Ok(out)
}

/// Single pass, so braces inside slot values are never re-expanded.
fn fill(id: &str, text: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").expect("checked at parse time");
        let name = after[..end].trim();
        let value = slots
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::MissingSlot { id: id.to_string(), slot: name.to_string() })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

macro_rules! builtin {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../templates/", $path, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "web/overview",
    "web/draft",
    "web/structure",
    "web/fused",
    "web/propose_first",
    "web/step",
    "mobile/overview",
    "mobile/draft",
    "mobile/structure",
    "mobile/fused",
    "mobile/propose_first",
    "mobile/step",
    "common/draft_rag",
    "common/structure_repair",
    "common/propose_next",
    "common/check_done",
    "common/summarize",
    "common/rewrite",
    "common/reasoning",
    "common/rerank",
    "common/variant",
];

/// Names every pipeline stage renders.
pub mod names {
    pub const OVERVIEW: &str = "overview";
    pub const DRAFT: &str = "draft";
    pub const DRAFT_RAG: &str = "draft_rag";
    pub const STRUCTURE: &str = "structure";
    pub const STRUCTURE_REPAIR: &str = "structure_repair";
    pub const FUSED: &str = "fused";
    pub const PROPOSE_FIRST: &str = "propose_first";
    pub const PROPOSE_NEXT: &str = "propose_next";
    pub const CHECK_DONE: &str = "check_done";
    pub const STEP: &str = "step";
    pub const SUMMARIZE: &str = "summarize";
    pub const REWRITE: &str = "rewrite";
    pub const REASONING: &str = "reasoning";
    pub const RERANK: &str = "rerank";
    pub const VARIANT: &str = "variant";

    pub const ALL: &[&str] = &[
        OVERVIEW,
        DRAFT,
        DRAFT_RAG,
        STRUCTURE,
        STRUCTURE_REPAIR,
        FUSED,
        PROPOSE_FIRST,
        PROPOSE_NEXT,
        CHECK_DONE,
        STEP,
        SUMMARIZE,
        REWRITE,
        REASONING,
        RERANK,
        VARIANT,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, text)| (id.to_string(), Template::parse(id, text).expect("builtin templates are well-formed")))
            .collect();
        Self { templates }
    }

    /// Adds or replaces a template under `id` (e.g. `web/overview`).
    pub fn insert(&mut self, id: &str, text: &str) -> Result<(), PromptError> {
        let t = Template::parse(id, text)?;
        self.templates.insert(id.to_string(), t);
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn get(&self, domain: Domain, name: &str) -> Result<&Template, PromptError> {
        let specific = alloc::format!("{}/{name}", domain.as_str());
        self.templates
            .get(&specific)
            .or_else(|| self.templates.get(&alloc::format!("common/{name}")))
            .ok_or(PromptError::UnknownTemplate(specific))
    }

    pub fn render(&self, domain: Domain, name: &str, slots: &[(&str, &str)]) -> Result<Prompt, PromptError> {
        self.get(domain, name)?.render(slots)
    }
}

/// Text between `<tag>` and `</tag>`, trimmed of the surrounding newlines.
pub fn tagged<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = alloc::format!("<{tag}>");
    let close = alloc::format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = start + text[start..].find(&close)?;
    Some(text[start..end].trim_matches('\n'))
}

/// If `line` opens one of `labels` (case-insensitive, optional markdown
/// emphasis or heading marks), returns the label index and the text after
/// the colon.
fn label_of<'a>(line: &'a str, labels: &[&str]) -> Option<(usize, &'a str)> {
    let l = line.trim_start().trim_start_matches(['#', '*', ' ']);
    for (i, label) in labels.iter().enumerate() {
        if l.len() >= label.len() && l.is_char_boundary(label.len()) && l[..label.len()].eq_ignore_ascii_case(label) {
            let rest = l[label.len()..].trim_start_matches('*');
            if let Some(value) = rest.strip_prefix(':') {
                return Some((i, value.trim_start_matches('*')));
            }
        }
    }
    None
}

/// Splits a model response into labeled sections.
///
/// A section starts at a line beginning with `Label:` and runs until the next
/// known label. Only the first occurrence of each label is kept. Values are
/// trimmed.
pub fn sections(text: &str, labels: &[&str]) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<(usize, String)> = None;
    let flush = |cur: Option<(usize, String)>, out: &mut BTreeMap<String, String>| {
        if let Some((i, v)) = cur {
            out.entry(labels[i].to_string()).or_insert_with(|| v.trim().to_string());
        }
    };
    for line in text.lines() {
        if let Some((i, first)) = label_of(line, labels) {
            flush(current.take(), &mut out);
            current = Some((i, first.to_string()));
        } else if let Some((_, v)) = current.as_mut() {
            v.push('\n');
            v.push_str(line);
        }
    }
    flush(current, &mut out);
    out
}

/// Parses `Yes` / `No` at the start of a value, ignoring case and trailing
/// punctuation.
pub fn yes_no(value: &str) -> Option<bool> {
    let word: String = value.trim().chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    match word.to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Items of a `- item` / `* item` / `1. item` list, in order.
pub fn list_items(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let l = line.trim();
        let item = if let Some(r) = l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")) {
            r
        } else {
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            match (digits > 0).then(|| &l[digits..]).and_then(|r| r.strip_prefix('.').or_else(|| r.strip_prefix(')'))) {
                Some(r) => r,
                None => continue,
            }
        };
        let item = item.trim();
        if !item.is_empty() {
            out.push(item.to_string());
        }
    }
    out
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map_or("", |(_, b)| b);
        return body.trim_end().strip_suffix("```").unwrap_or(body).trim_matches('\n');
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn every_stage_resolves_in_both_domains() {
        let set = TemplateSet::builtin();
        for d in [Domain::Web, Domain::Mobile] {
            for n in names::ALL {
                assert!(set.get(d, n).is_ok(), "{d:?} {n}");
            }
        }
        assert_eq!(set.get(Domain::Mobile, names::CHECK_DONE).unwrap().id, "common/check_done");
        assert_eq!(set.get(Domain::Mobile, names::STEP).unwrap().id, "mobile/step");
    }

    #[test]
    fn render_fills_slots_once() {
        let t = Template::parse("x", "=== system\nS {{a}}\n=== user\nU {{ b }} {{a}}\n").unwrap();
        assert_eq!(t.slots(), vec!["a", "b"]);
        let p = t.render(&[("a", "{{b}}"), ("b", "2")]).unwrap();
        assert_eq!(p.system, "S {{b}}");
        assert_eq!(p.user, "U 2 {{b}}");
        assert!(matches!(t.render(&[("a", "1")]), Err(PromptError::MissingSlot { .. })));
        assert!(Template::parse("x", "no header").is_err());
        assert!(Template::parse("x", "=== system\n{{a\n=== user\n").is_err());
    }

    #[test]
    fn section_parsing() {
        let r = "Thought: Let's think.\nMore.\n**New window:** A results page.\nKey Info: None\nAnswer: Yes.";
        let s = sections(r, &["Thought", "New window", "Key Info", "Answer"]);
        assert_eq!(s["Thought"], "Let's think.\nMore.");
        assert_eq!(s["New window"], "A results page.");
        assert_eq!(s["Key Info"], "None");
        assert_eq!(yes_no(&s["Answer"]), Some(true));
        assert_eq!(yes_no("maybe"), None);
    }

    #[test]
    fn lists_and_fences() {
        assert_eq!(list_items("Task controls:\n- a\n2. b\n* c\nnot\n3) d"), vec!["a", "b", "c", "d"]);
        assert_eq!(strip_code_fence("```text\n[1] RootWebArea 'x'\n```"), "[1] RootWebArea 'x'");
        assert_eq!(strip_code_fence("plain"), "plain");
        assert_eq!(tagged("a <x>\nbody\n</x>", "x"), Some("body"));
    }
}
