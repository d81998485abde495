//! Web indented-tree format.
//!
//! ```text
//! [1] RootWebArea 'Dashboard' focused: True
//! 	[12] link 'Orders'
//! 	[13] textbox 'Search' required: False bbox: [0,2400,40,80]
//! ```
//!
//! Indentation is one tab or a fixed run of spaces per level, fixed by the
//! first indented line. Properties are `key: value` pairs; `bbox` is lifted
//! into the element's bounding box.
#![allow(clippy::tabs_in_doc_comments)]

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::quote::{py_repr, py_unquote};
use super::{Attributes, AxTreeError, BoundingBox, Domain, ElementId, UiElement, UiState};

const BBOX_KEY: &str = "bbox";

pub fn parse_web_tree(text: &str) -> Result<UiState, AxTreeError> {
    let mut indent_unit: Option<String> = None;
    let mut elements: Vec<UiElement> = Vec::new();
    let mut seen = BTreeSet::new();
    // stack[d] = index into `elements` of the open element at depth d
    let mut stack: Vec<usize> = Vec::new();
    let mut root: Option<ElementId> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let body = line.trim_start();
        let indent = &line[..line.len() - body.len()];
        let depth = if indent.is_empty() {
            0
        } else {
            let unit = indent_unit.get_or_insert_with(|| indent.to_string());
            indent_depth(indent, unit).ok_or_else(|| AxTreeError::MalformedLine {
                line: line_no,
                reason: "indentation is not a whole number of indent units".to_string(),
            })?
        };

        let el = parse_line(body, line_no)?;
        if !seen.insert(el.id) {
            return Err(AxTreeError::DuplicateId { line: line_no, id: el.id });
        }

        if root.is_none() {
            if depth != 0 {
                return Err(AxTreeError::IndentJump { line: line_no });
            }
            root = Some(el.id);
        } else if depth == 0 {
            return Err(AxTreeError::MultipleRoots { line: line_no });
        } else if depth > stack.len() {
            return Err(AxTreeError::IndentJump { line: line_no });
        }
        stack.truncate(depth);
        if let Some(&parent) = stack.last() {
            let id = el.id;
            elements[parent].children.push(id);
        }
        stack.push(elements.len());
        elements.push(el);
    }

    let root = root.ok_or_else(|| AxTreeError::MalformedLine {
        line: 1,
        reason: "empty tree".to_string(),
    })?;
    UiState::new(Domain::Web, root, elements)
}

fn indent_depth(indent: &str, unit: &str) -> Option<usize> {
    let first = unit.chars().next()?;
    if !unit.chars().all(|c| c == first) || !indent.chars().all(|c| c == first) {
        return None;
    }
    if indent.len() % unit.len() != 0 {
        return None;
    }
    Some(indent.len() / unit.len())
}

fn malformed(line: usize, reason: &str) -> AxTreeError {
    AxTreeError::MalformedLine { line, reason: reason.to_string() }
}

pub(super) fn parse_line(body: &str, line: usize) -> Result<UiElement, AxTreeError> {
    let rest = body.strip_prefix('[').ok_or_else(|| malformed(line, "expected `[id]` prefix"))?;
    let close = rest.find(']').ok_or_else(|| malformed(line, "unterminated `[id]`"))?;
    let id: u32 = rest[..close]
        .trim()
        .parse()
        .map_err(|_| malformed(line, "element id is not a non-negative integer"))?;
    let rest = &rest[close + 1..];
    if !rest.starts_with(' ') {
        return Err(malformed(line, "expected a role after the id"));
    }
    let rest = rest.trim_start();
    let role_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let role = &rest[..role_end];
    if role.is_empty() {
        return Err(malformed(line, "missing role"));
    }
    let mut rest = rest[role_end..].trim_start();

    let mut el = UiElement::new(id, role);
    if rest.starts_with('\'') || rest.starts_with('"') {
        let (content, used) = py_unquote(rest).ok_or_else(|| malformed(line, "unterminated quoted content"))?;
        el.content = Some(content);
        rest = &rest[used..];
        if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
            return Err(malformed(line, "text directly after quoted content"));
        }
        rest = rest.trim_start();
    }

    let (attributes, bbox) = parse_properties(rest, line)?;
    el.attributes = attributes;
    el.bbox = bbox;
    Ok(el)
}

fn is_key_token(tok: &str) -> bool {
    let Some(name) = tok.strip_suffix(':') else { return false };
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn parse_properties(rest: &str, line: usize) -> Result<(Attributes, Option<BoundingBox>), AxTreeError> {
    let mut attrs = Attributes::new();
    let mut bbox = None;
    let mut current: Option<(String, Vec<&str>)> = None;
    let mut finish = |key: String, vals: Vec<&str>, attrs: &mut Attributes| -> Result<(), AxTreeError> {
        let value = vals.join(" ");
        if key == BBOX_KEY {
            bbox = Some(parse_bbox(&value).ok_or_else(|| malformed(line, "bad bbox"))?);
        } else {
            attrs.insert(key, value);
        }
        Ok(())
    };
    for tok in rest.split_whitespace() {
        if is_key_token(tok) {
            if let Some((key, vals)) = current.take() {
                finish(key, vals, &mut attrs)?;
            }
            current = Some((tok[..tok.len() - 1].to_string(), Vec::new()));
        } else {
            match current.as_mut() {
                Some((_, vals)) => vals.push(tok),
                None => return Err(malformed(line, "expected `key: value` property")),
            }
        }
    }
    if let Some((key, vals)) = current.take() {
        finish(key, vals, &mut attrs)?;
    }
    Ok((attrs, bbox))
}

fn parse_bbox(value: &str) -> Option<BoundingBox> {
    let inner = value.strip_prefix('[')?.strip_suffix(']')?;
    let mut nums = inner.split(',').map(|p| p.trim().parse::<u32>());
    let x_min = nums.next()?.ok()?;
    let x_max = nums.next()?.ok()?;
    let y_min = nums.next()?.ok()?;
    let y_max = nums.next()?.ok()?;
    if nums.next().is_some() {
        return None;
    }
    BoundingBox::new(x_min, x_max, y_min, y_max).ok()
}

pub(super) fn serialize(state: &UiState, filter: Option<&BTreeSet<ElementId>>) -> String {
    let mut out = String::new();
    let mut included_depth: Vec<(usize, usize)> = Vec::new(); // (tree depth, emitted depth)
    for (id, depth) in state.walk() {
        while matches!(included_depth.last(), Some((d, _)) if *d >= depth) {
            included_depth.pop();
        }
        if filter.is_some_and(|f| !f.contains(&id)) {
            continue;
        }
        let emitted = included_depth.last().map_or(0, |(_, e)| e + 1);
        included_depth.push((depth, emitted));
        if !out.is_empty() {
            out.push('\n');
        }
        for _ in 0..emitted {
            out.push('\t');
        }
        write_line(&mut out, state.get(id).expect("walked id exists"));
    }
    out
}

fn write_line(out: &mut String, el: &UiElement) {
    use core::fmt::Write;
    let _ = write!(out, "[{}] {}", el.id, el.role);
    if let Some(content) = &el.content {
        out.push(' ');
        out.push_str(&py_repr(content));
    }
    for (k, v) in el.attributes.iter() {
        let _ = write!(out, " {k}: {v}");
    }
    if let Some(b) = el.bbox {
        let _ = write!(out, " {BBOX_KEY}: [{},{},{},{}]", b.x_min, b.x_max, b.y_min, b.y_max);
    }
}
