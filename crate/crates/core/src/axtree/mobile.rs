//! Mobile element-list format.
//!
//! ```text
//! Element 0: UIElement(text=Save, content_description=None, class_name=android.widget.Button, bbox=None, bbox_pixels=BoundingBox(x_min=0, x_max=1080, y_min=0, y_max=120), ...)
//! ```
//!
//! `text` becomes the element content, `class_name` its role and
//! `bbox_pixels` its bounding box. `None` means the field is absent. The
//! elements hang flat under a synthetic root that is never printed.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Attributes, AxTreeError, BoundingBox, Domain, ElementId, UiElement, UiState};

pub const MOBILE_ROOT_ID: ElementId = ElementId(u32::MAX);
pub const MOBILE_ROOT_ROLE: &str = "Screen";

/// Field order of an AndroidWorld `UIElement`, used when serializing.
pub const MOBILE_STANDARD_FIELDS: &[&str] = &[
    "text",
    "content_description",
    "class_name",
    "bbox",
    "bbox_pixels",
    "hint_text",
    "is_checked",
    "is_checkable",
    "is_clickable",
    "is_editable",
    "is_enabled",
    "is_focused",
    "is_focusable",
    "is_long_clickable",
    "is_scrollable",
    "is_selected",
    "is_visible",
    "package_name",
    "resource_name",
    "tooltip",
    "resource_id",
    "metadata",
];

const NONE: &str = "None";
const BBOX_PREFIX: &str = "BoundingBox(";

pub fn parse_mobile_elements(text: &str) -> Result<UiState, AxTreeError> {
    let mut root = UiElement::new(MOBILE_ROOT_ID.0, MOBILE_ROOT_ROLE);
    let mut elements = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let el = parse_line(line, line_no)?;
        if el.id == MOBILE_ROOT_ID || !seen.insert(el.id) {
            return Err(AxTreeError::DuplicateId { line: line_no, id: el.id });
        }
        root.children.push(el.id);
        elements.push(el);
    }
    elements.push(root);
    UiState::new(Domain::Mobile, MOBILE_ROOT_ID, elements)
}

fn malformed(line: usize, reason: &str) -> AxTreeError {
    AxTreeError::MalformedLine { line, reason: reason.to_string() }
}

pub(super) fn parse_line(line: &str, line_no: usize) -> Result<UiElement, AxTreeError> {
    let rest = line
        .strip_prefix("Element ")
        .ok_or_else(|| malformed(line_no, "expected `Element N:` prefix"))?;
    let colon = rest.find(':').ok_or_else(|| malformed(line_no, "expected `:` after element index"))?;
    let id: u32 = rest[..colon]
        .trim()
        .parse()
        .map_err(|_| malformed(line_no, "element index is not a non-negative integer"))?;
    let rest = rest[colon + 1..].trim_start();
    let inner = rest
        .strip_prefix("UIElement(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| malformed(line_no, "expected `UIElement(...)`"))?;

    let mut el = UiElement::new(id, "");
    let mut attrs = Attributes::new();
    for (key, value) in split_fields(inner, line_no)? {
        let value = if value == NONE { None } else { Some(value) };
        match key {
            "text" => el.content = value.map(str::to_string),
            "class_name" => el.role = value.unwrap_or("").to_string(),
            "bbox_pixels" => {
                el.bbox = match value {
                    Some(v) => Some(parse_bbox(v).ok_or_else(|| malformed(line_no, "bad bbox_pixels"))?),
                    None => None,
                }
            }
            _ => {
                if let Some(v) = value {
                    attrs.insert(key, v);
                }
            }
        }
    }
    el.attributes = attrs;
    Ok(el)
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_lowercase() || c == b'_'
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == b'_'
}

/// Length of `key=` at the start of `s`, if present.
fn key_prefix_len(s: &[u8]) -> Option<usize> {
    if !s.first().is_some_and(|c| is_ident_start(*c)) {
        return None;
    }
    let n = s.iter().take_while(|c| is_ident(**c)).count();
    (s.get(n) == Some(&b'=')).then_some(n + 1)
}

/// Splits `k=v, k=v, ...` at top level. Values may contain commas; a field
/// boundary is `, ` followed by `identifier=` or by a trailing `...`.
fn split_fields(inner: &str, line_no: usize) -> Result<Vec<(&str, &str)>, AxTreeError> {
    let bytes = inner.as_bytes();
    let mut fields = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if inner[pos..].trim() == "..." {
            break;
        }
        let klen = key_prefix_len(&bytes[pos..]).ok_or_else(|| malformed(line_no, "expected `key=value`"))?;
        let key = &inner[pos..pos + klen - 1];
        let vstart = pos + klen;
        let vend = if inner[vstart..].starts_with(BBOX_PREFIX) {
            let mut depth = 0usize;
            let mut end = None;
            for (i, b) in bytes[vstart..].iter().enumerate() {
                match b {
                    b'(' => depth += 1,
                    b')' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(vstart + i + 1);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            end.ok_or_else(|| malformed(line_no, "unterminated BoundingBox("))?
        } else {
            let mut end = bytes.len();
            let mut i = vstart;
            while i + 1 < bytes.len() {
                if bytes[i] == b',' && bytes[i + 1] == b' ' {
                    let after = &bytes[i + 2..];
                    if key_prefix_len(after).is_some() || inner[i + 2..].trim() == "..." {
                        end = i;
                        break;
                    }
                }
                i += 1;
            }
            end
        };
        fields.push((key, &inner[vstart..vend]));
        pos = vend;
        if pos < bytes.len() {
            if !inner[pos..].starts_with(", ") {
                return Err(malformed(line_no, "expected `, ` between fields"));
            }
            pos += 2;
        }
    }
    Ok(fields)
}

fn parse_bbox(v: &str) -> Option<BoundingBox> {
    let inner = v.strip_prefix(BBOX_PREFIX)?.strip_suffix(')')?;
    let mut vals = [None; 4];
    for part in inner.split(',') {
        let (k, n) = part.trim().split_once('=')?;
        let n: u32 = n.trim().parse().ok()?;
        let slot = match k.trim() {
            "x_min" => 0,
            "x_max" => 1,
            "y_min" => 2,
            "y_max" => 3,
            _ => return None,
        };
        vals[slot] = Some(n);
    }
    BoundingBox::new(vals[0]?, vals[1]?, vals[2]?, vals[3]?).ok()
}

pub(super) fn serialize(state: &UiState, filter: Option<&BTreeSet<ElementId>>) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    for id in &state.root().children {
        if filter.is_some_and(|f| !f.contains(id)) {
            continue;
        }
        let el = state.get(*id).expect("child exists");
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = write!(out, "Element {}: UIElement(", el.id);
        let mut first = true;
        let mut field = |out: &mut String, k: &str, v: Option<&str>| {
            if !first {
                out.push_str(", ");
            }
            first = false;
            let _ = write!(out, "{k}={}", v.unwrap_or(NONE));
        };
        for key in MOBILE_STANDARD_FIELDS {
            match *key {
                "text" => field(&mut out, key, el.content.as_deref()),
                "class_name" => field(&mut out, key, (!el.role.is_empty()).then_some(el.role.as_str())),
                "bbox_pixels" => {
                    let b = el.bbox.map(|b| {
                        alloc::format!(
                            "BoundingBox(x_min={}, x_max={}, y_min={}, y_max={})",
                            b.x_min, b.x_max, b.y_min, b.y_max
                        )
                    });
                    field(&mut out, key, b.as_deref());
                }
                _ => field(&mut out, key, el.attributes.get(key)),
            }
        }
        for (k, v) in el.attributes.iter() {
            if !MOBILE_STANDARD_FIELDS.contains(&k) {
                field(&mut out, k, Some(v));
            }
        }
        out.push(')');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONTACT: &str = "Element 0: UIElement(text=None, content_description=Create contact, class_name=android.view.View, bbox=None, bbox_pixels=BoundingBox(x_min=0, x_max=1080, y_min=0, y_max=2400), hint_text=None, is_checked=False, is_checkable=False, is_clickable=False, is_editable=False, is_enabled=True, is_focused=False, is_focusable=False, is_long_clickable=False, is_scrollable=False, is_selected=False, is_visible=True, package_name=com.google.android.contacts, resource_name=com.google.android.contacts:id/background_container, tooltip=None, resource_id=None, metadata=None)";

    #[test]
    fn parses_android_world_dump_byte_exactly() {
        let s = parse_mobile_elements(CONTACT).unwrap();
        let el = s.get(ElementId(0)).unwrap();
        assert!(el.content.is_none());
        assert_eq!(el.role, "android.view.View");
        assert_eq!(el.attributes.get("content_description"), Some("Create contact"));
        assert_eq!(el.attributes.get("hint_text"), None);
        assert_eq!(el.bbox, Some(BoundingBox::new(0, 1080, 0, 2400).unwrap()));
        assert_eq!(s.url_or_app(), "com.google.android.contacts");
        assert_eq!(s.to_text(), CONTACT);
    }

    #[test]
    fn text_becomes_content_and_ellipsis_is_tolerated() {
        let s = parse_mobile_elements("Element 0: UIElement(text=Save, content_description=None, ...)").unwrap();
        let el = s.get(ElementId(0)).unwrap();
        assert_eq!(el.content.as_deref(), Some("Save"));
        assert_eq!(el.attributes.get("content_description"), None);
    }

    #[test]
    fn values_may_contain_commas() {
        let s = parse_mobile_elements(
            "Element 3: UIElement(text=Pittsburgh, PA 15213, class_name=android.widget.TextView)",
        )
        .unwrap();
        assert_eq!(s.get(ElementId(3)).unwrap().content.as_deref(), Some("Pittsburgh, PA 15213"));
    }

    #[test]
    fn empty_screen_has_root_only() {
        let s = parse_mobile_elements("").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.root_id(), MOBILE_ROOT_ID);
        assert_eq!(s.to_text(), "");
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_mobile_elements("Elem 0: x"), Err(AxTreeError::MalformedLine { .. })));
        assert!(matches!(
            parse_mobile_elements("Element 1: UIElement(text=a)\nElement 1: UIElement(text=b)"),
            Err(AxTreeError::DuplicateId { line: 2, .. })
        ));
        assert!(matches!(
            parse_mobile_elements("Element 1: UIElement(text=a, bbox_pixels=BoundingBox(x_min=1)"),
            Err(AxTreeError::MalformedLine { .. })
        ));
    }
}
