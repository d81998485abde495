//! Accessibility-tree state model.
//!
//! A [`UiState`] is the full tree of one screen or page, including elements
//! that are scrolled out of view. Two text encodings are supported:
//!
//! * the web indented tree (`[1] RootWebArea 'Title' focused: True`), one
//!   element per line, nesting expressed by indentation;
//! * the mobile element list (`Element 0: UIElement(text=Save, ...)`), a flat
//!   list hung under a synthetic root.
//!
//! Element ids are kept exactly as written in the input; actions refer to them
//! verbatim.

mod mobile;
mod quote;
mod web;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mobile::{parse_mobile_elements, MOBILE_ROOT_ID, MOBILE_ROOT_ROLE, MOBILE_STANDARD_FIELDS};
pub use quote::{py_repr, py_unquote};
pub use web::parse_web_tree;

/// Element identifier, unique within one [`UiState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Web,
    Mobile,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Web => "web",
            Domain::Mobile => "mobile",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "web" => Ok(Domain::Web),
            "mobile" | "android" => Ok(Domain::Mobile),
            other => Err(alloc::format!("unknown domain `{other}`")),
        }
    }
}

/// Pixel rectangle `(x_min, x_max, y_min, y_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: u32,
    pub x_max: u32,
    pub y_min: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, x_max: u32, y_min: u32, y_max: u32) -> Result<Self, AxTreeError> {
        if x_min > x_max || y_min > y_max {
            return Err(AxTreeError::InvalidBoundingBox { x_min, x_max, y_min, y_max });
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    /// Closed-interval overlap test against `[x0, x1] × [y0, y1]`.
    pub fn intersects(&self, x0: u64, x1: u64, y0: u64, y1: u64) -> bool {
        u64::from(self.x_min) <= x1
            && u64::from(self.x_max) >= x0
            && u64::from(self.y_min) <= y1
            && u64::from(self.y_max) >= y0
    }
}

/// Insertion-ordered string map. Order is kept for byte-faithful
/// serialization; equality ignores it.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Attributes(Vec<(String, String)>);

impl Attributes {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Sets `key`, keeping its position when it already exists.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.0.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key, value)),
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        let pos = self.0.iter().position(|(k, _)| k == key)?;
        Some(self.0.remove(pos).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl PartialEq for Attributes {
    fn eq(&self, other: &Self) -> bool {
        if self.0.len() != other.0.len() {
            return false;
        }
        let lhs: BTreeMap<_, _> = self.iter().collect();
        let rhs: BTreeMap<_, _> = other.iter().collect();
        lhs == rhs
    }
}

impl Eq for Attributes {}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Attributes {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut attrs = Attributes::new();
        for (k, v) in iter {
            attrs.insert(k, v);
        }
        attrs
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiElement {
    pub id: ElementId,
    pub role: String,
    pub content: Option<String>,
    pub bbox: Option<BoundingBox>,
    pub attributes: Attributes,
    pub children: Vec<ElementId>,
}

impl UiElement {
    pub fn new(id: u32, role: impl Into<String>) -> Self {
        Self {
            id: ElementId(id),
            role: role.into(),
            content: None,
            bbox: None,
            attributes: Attributes::new(),
            children: Vec::new(),
        }
    }

    pub fn with_content(mut self, content: impl Into<String>) -> Self {
        self.content = Some(content.into());
        self
    }

    pub fn with_bbox(mut self, bbox: BoundingBox) -> Self {
        self.bbox = Some(bbox);
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key, value);
        self
    }

    pub fn with_children(mut self, children: impl IntoIterator<Item = u32>) -> Self {
        self.children = children.into_iter().map(ElementId).collect();
        self
    }

    pub fn content_str(&self) -> &str {
        self.content.as_deref().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AxTreeError {
    #[error("line {line}: malformed element line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: duplicate element id {id}")]
    DuplicateId { line: usize, id: ElementId },
    #[error("line {line}: indentation jumps more than one level")]
    IndentJump { line: usize },
    #[error("line {line}: second top-level element; a tree has exactly one root")]
    MultipleRoots { line: usize },
    #[error("unknown element id {0}")]
    UnknownId(ElementId),
    #[error("invalid bounding box ({x_min}, {x_max}, {y_min}, {y_max})")]
    InvalidBoundingBox { x_min: u32, x_max: u32, y_min: u32, y_max: u32 },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
}

/// Full UI state: one accessibility tree.
///
/// Immutable once built; every constructor validates the tree invariants.
/// Parses one element line of either format, ignoring indentation.
pub fn parse_element_line(domain: Domain, line: &str) -> Result<UiElement, AxTreeError> {
    match domain {
        Domain::Web => web::parse_line(line.trim(), 1),
        Domain::Mobile => mobile::parse_line(line.trim(), 1),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UiState {
    root: ElementId,
    elements: BTreeMap<ElementId, UiElement>,
    domain: Domain,
}

pub const WEB_ROOT_ROLE: &str = "RootWebArea";

impl UiState {
    /// Builds a state from its root id and element list.
    pub fn new(
        domain: Domain,
        root: ElementId,
        elements: impl IntoIterator<Item = UiElement>,
    ) -> Result<Self, AxTreeError> {
        let mut map = BTreeMap::new();
        for el in elements {
            let id = el.id;
            if map.insert(id, el).is_some() {
                return Err(AxTreeError::DuplicateId { line: 0, id });
            }
        }
        let state = Self { root, elements: map, domain };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<(), AxTreeError> {
        let root = self.elements.get(&self.root).ok_or(AxTreeError::UnknownId(self.root))?;
        if self.domain == Domain::Web && root.role != WEB_ROOT_ROLE {
            return Err(AxTreeError::InvalidTree(alloc::format!(
                "web root must be {WEB_ROOT_ROLE}, found {}",
                root.role
            )));
        }
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![self.root];
        seen.insert(self.root);
        while let Some(id) = stack.pop() {
            let el = &self.elements[&id];
            for child in &el.children {
                if !self.elements.contains_key(child) {
                    return Err(AxTreeError::UnknownId(*child));
                }
                if !seen.insert(*child) {
                    return Err(AxTreeError::InvalidTree(alloc::format!(
                        "element {child} has more than one parent or lies on a cycle"
                    )));
                }
                stack.push(*child);
            }
        }
        if seen.len() != self.elements.len() {
            return Err(AxTreeError::InvalidTree("element unreachable from root".to_string()));
        }
        if self.domain == Domain::Mobile {
            for (id, el) in &self.elements {
                if *id != self.root && !el.children.is_empty() {
                    return Err(AxTreeError::InvalidTree(
                        "mobile element lists are flat; only the root has children".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Single-element web page.
    pub fn blank_web(id: u32, title: &str) -> Self {
        let root = UiElement::new(id, WEB_ROOT_ROLE).with_content(title);
        Self::new(Domain::Web, ElementId(id), [root]).expect("single root is a valid tree")
    }

    pub fn root_id(&self) -> ElementId {
        self.root
    }

    pub fn root(&self) -> &UiElement {
        &self.elements[&self.root]
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn get(&self, id: ElementId) -> Option<&UiElement> {
        self.elements.get(&id)
    }

    pub fn contains(&self, id: ElementId) -> bool {
        self.elements.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = &UiElement> {
        self.elements.values()
    }

    pub fn max_id(&self) -> ElementId {
        *self.elements.keys().next_back().expect("state always has a root")
    }

    /// Largest id excluding the synthetic mobile root.
    pub fn max_real_id(&self) -> Option<ElementId> {
        self.elements
            .keys()
            .rev()
            .find(|id| !(self.domain == Domain::Mobile && **id == self.root))
            .copied()
    }

    /// URL (web root `url` attribute) or app package (first mobile element).
    pub fn url_or_app(&self) -> &str {
        match self.domain {
            Domain::Web => self.root().attributes.get("url").unwrap_or(""),
            Domain::Mobile => self
                .root()
                .children
                .first()
                .and_then(|id| self.elements[id].attributes.get("package_name"))
                .unwrap_or(""),
        }
    }

    /// Pre-order traversal paired with depth (root at depth 0).
    pub fn walk(&self) -> Vec<(ElementId, usize)> {
        let mut out = Vec::with_capacity(self.elements.len());
        let mut stack = alloc::vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            out.push((id, depth));
            let el = &self.elements[&id];
            for child in el.children.iter().rev() {
                stack.push((*child, depth + 1));
            }
        }
        out
    }

    pub fn document_order(&self) -> Vec<ElementId> {
        self.walk().into_iter().map(|(id, _)| id).collect()
    }

    /// Parent of every non-root element.
    pub fn parents(&self) -> BTreeMap<ElementId, ElementId> {
        let mut parents = BTreeMap::new();
        for el in self.elements.values() {
            for child in &el.children {
                parents.insert(*child, el.id);
            }
        }
        parents
    }

    /// Serializes the whole state, or only `ids` when given.
    ///
    /// For subsets the indentation depth counts only included ancestors, so
    /// the output stays parseable when the subset is ancestor-closed.
    pub fn serialize(&self, ids: Option<&[ElementId]>) -> Result<String, AxTreeError> {
        let filter = match ids {
            Some(ids) => {
                let mut set = BTreeSet::new();
                for id in ids {
                    if !self.contains(*id) {
                        return Err(AxTreeError::UnknownId(*id));
                    }
                    set.insert(*id);
                }
                Some(set)
            }
            None => None,
        };
        Ok(match self.domain {
            Domain::Web => web::serialize(self, filter.as_ref()),
            Domain::Mobile => mobile::serialize(self, filter.as_ref()),
        })
    }

    /// Serializes the full state.
    pub fn to_text(&self) -> String {
        self.serialize(None).expect("full serialization has no unknown ids")
    }

    /// Parses text in the given domain's format.
    pub fn parse(domain: Domain, text: &str) -> Result<Self, AxTreeError> {
        match domain {
            Domain::Web => parse_web_tree(text),
            Domain::Mobile => parse_mobile_elements(text),
        }
    }

    /// Returns a copy with `f` applied to one element. Tree shape must not
    /// change through `f`.
    pub fn with_element_updated(
        &self,
        id: ElementId,
        f: impl FnOnce(&mut UiElement),
    ) -> Result<Self, AxTreeError> {
        let mut next = self.clone();
        let el = next.elements.get_mut(&id).ok_or(AxTreeError::UnknownId(id))?;
        let children = el.children.clone();
        f(el);
        el.id = id;
        el.children = children;
        Ok(next)
    }

    /// Returns a copy with every bounding box replaced by `assign(id)`.
    pub fn with_bboxes(&self, mut assign: impl FnMut(ElementId) -> Option<BoundingBox>) -> Self {
        let mut next = self.clone();
        for (id, el) in next.elements.iter_mut() {
            el.bbox = assign(*id);
        }
        next
    }

    /// Renumbers every non-synthetic element to consecutive ids starting at
    /// `first`, in document order.
    pub fn renumbered(&self, first: u32) -> Result<Self, AxTreeError> {
        let mut mapping = BTreeMap::new();
        let mut next_id = first;
        for id in self.document_order() {
            if self.domain == Domain::Mobile && id == self.root {
                mapping.insert(id, id);
                continue;
            }
            if self.domain == Domain::Mobile && next_id == MOBILE_ROOT_ID.0 {
                return Err(AxTreeError::InvalidTree("element id space exhausted".to_string()));
            }
            mapping.insert(id, ElementId(next_id));
            next_id = next_id
                .checked_add(1)
                .ok_or_else(|| AxTreeError::InvalidTree("element id space exhausted".to_string()))?;
        }
        let elements = self.elements.values().map(|el| {
            let mut el = el.clone();
            el.id = mapping[&el.id];
            el.children = el.children.iter().map(|c| mapping[c]).collect();
            el
        });
        UiState::new(self.domain, mapping[&self.root], elements)
    }

    /// Replaces the subtree rooted at `target` with `replacement`'s root
    /// subtree. Ids in `replacement` must not collide with ids outside the
    /// replaced subtree.
    pub fn with_subtree_replaced(
        &self,
        target: ElementId,
        replacement: &UiState,
        replacement_root: ElementId,
    ) -> Result<Self, AxTreeError> {
        let parents = self.parents();
        let parent = *parents.get(&target).ok_or_else(|| {
            AxTreeError::InvalidTree("cannot replace the root subtree".to_string())
        })?;
        let mut next = self.clone();
        for id in self.subtree(target) {
            next.elements.remove(&id);
        }
        let inserted = replacement.subtree(replacement_root);
        for id in &inserted {
            let el = replacement.elements[id].clone();
            if next.elements.insert(*id, el).is_some() {
                return Err(AxTreeError::DuplicateId { line: 0, id: *id });
            }
        }
        let parent_el = next.elements.get_mut(&parent).expect("parent survives");
        for child in parent_el.children.iter_mut() {
            if *child == target {
                *child = replacement_root;
            }
        }
        next.validate()?;
        Ok(next)
    }

    /// Appends `replacement`'s subtree at `replacement_root` as the last
    /// child of this state's root.
    pub fn with_subtree_appended(
        &self,
        replacement: &UiState,
        replacement_root: ElementId,
    ) -> Result<Self, AxTreeError> {
        let mut next = self.clone();
        for id in replacement.subtree(replacement_root) {
            let el = replacement.elements[&id].clone();
            if next.elements.insert(id, el).is_some() {
                return Err(AxTreeError::DuplicateId { line: 0, id });
            }
        }
        let root = next.root;
        next.elements.get_mut(&root).expect("root").children.push(replacement_root);
        next.validate()?;
        Ok(next)
    }

    /// Ids of the subtree rooted at `id`, in pre-order.
    pub fn subtree(&self, id: ElementId) -> Vec<ElementId> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![id];
        while let Some(cur) = stack.pop() {
            if let Some(el) = self.elements.get(&cur) {
                out.push(cur);
                stack.extend(el.children.iter().rev().copied());
            }
        }
        out
    }
}

/// Viewport-visible part of a state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub elements: Vec<ElementId>,
    pub rendered_text: String,
}

impl Observation {
    pub fn contains(&self, id: ElementId) -> bool {
        self.elements.contains(&id)
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

impl Serialize for UiState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("UiState", 2)?;
        s.serialize_field("domain", &self.domain)?;
        s.serialize_field("text", &self.to_text())?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for UiState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            domain: Domain,
            text: String,
        }
        let repr = Repr::deserialize(deserializer)?;
        UiState::parse(repr.domain, &repr.text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_unreachable_and_cyclic_trees() {
        let root = UiElement::new(1, WEB_ROOT_ROLE).with_children([2]);
        let child = UiElement::new(2, "link");
        let orphan = UiElement::new(3, "link");
        let err = UiState::new(Domain::Web, ElementId(1), [root.clone(), child.clone(), orphan]);
        assert!(matches!(err, Err(AxTreeError::InvalidTree(_))));

        let cyc = UiElement::new(2, "link").with_children([1]);
        let err = UiState::new(Domain::Web, ElementId(1), [root, cyc]);
        assert!(matches!(err, Err(AxTreeError::InvalidTree(_))));
    }

    #[test]
    fn web_root_must_be_root_web_area() {
        let err = UiState::new(Domain::Web, ElementId(1), [UiElement::new(1, "link")]);
        assert!(err.is_err());
    }

    #[test]
    fn bbox_invariants() {
        assert!(BoundingBox::new(5, 4, 0, 0).is_err());
        assert!(BoundingBox::new(0, 0, 0, 0).is_ok());
    }

    #[test]
    fn attributes_compare_as_maps() {
        let a: Attributes = vec![("a", "1"), ("b", "2")].into_iter().collect();
        let b: Attributes = vec![("b", "2"), ("a", "1")].into_iter().collect();
        assert_eq!(a, b);
        let c: Attributes = vec![("a", "1")].into_iter().collect();
        assert_ne!(a, c);
    }

    #[test]
    fn renumber_preserves_shape() {
        let state = parse_web_tree("[7] RootWebArea 'a'\n\t[3] link 'b'\n\t\t[9] StaticText 'c'").unwrap();
        let re = state.renumbered(100).unwrap();
        assert_eq!(re.to_text(), "[100] RootWebArea 'a'\n\t[101] link 'b'\n\t\t[102] StaticText 'c'");
    }

    #[test]
    fn subset_serialization() {
        let state = parse_web_tree("[1] RootWebArea 'a'\n\t[2] main ''\n\t\t[3] link 'x'").unwrap();
        assert_eq!(state.serialize(Some(&[])).unwrap(), "");
        assert_eq!(
            state.serialize(Some(&[ElementId(1), ElementId(3)])).unwrap(),
            "[1] RootWebArea 'a'\n\t[3] link 'x'"
        );
        assert_eq!(
            state.serialize(Some(&[ElementId(42)])),
            Err(AxTreeError::UnknownId(ElementId(42)))
        );
    }

    #[test]
    fn subtree_replacement() {
        let state =
            parse_web_tree("[1] RootWebArea 'a'\n\t[2] section 'Results'\n\t\t[3] link 'x'\n\t[4] link 'y'")
                .unwrap();
        let delta = parse_web_tree("[10] RootWebArea ''\n\t[11] section 'Results'\n\t\t[12] link 'z'").unwrap();
        let merged = state.with_subtree_replaced(ElementId(2), &delta, ElementId(11)).unwrap();
        assert_eq!(
            merged.to_text(),
            "[1] RootWebArea 'a'\n\t[11] section 'Results'\n\t\t[12] link 'z'\n\t[4] link 'y'"
        );
    }
}
