use alloc::collections::BTreeMap;

use crate::axtree::{BoundingBox, Domain, ElementId, UiState};
use crate::transition::Viewport;

/// Height of an element without children.
pub const LEAF_HEIGHT: u32 = 40;
/// Space above and below the children of a non-root container.
pub const SECTION_PADDING: u32 = 16;

/// Top-to-bottom flow layout.
///
/// Every element spans the full viewport width. Leaves are [`LEAF_HEIGHT`]
/// tall; a non-root element with children is as tall as its children plus
/// [`SECTION_PADDING`] above and below; the root's children start at y = 0
/// and the web root extends to at least one viewport height. Existing boxes
/// are discarded, so the result depends only on the tree shape.
pub fn assign_coordinates(state: &UiState, vp: &Viewport) -> UiState {
    let mut heights: BTreeMap<ElementId, u32> = BTreeMap::new();
    let walk = state.walk();
    for &(id, _) in walk.iter().rev() {
        let el = state.get(id).expect("walked ids exist");
        let h = if id == state.root_id() {
            let content: u32 = el.children.iter().map(|c| heights[c]).fold(0, u32::saturating_add);
            content.max(vp.height)
        } else if el.children.is_empty() {
            LEAF_HEIGHT
        } else {
            el.children.iter().map(|c| heights[c]).fold(2 * SECTION_PADDING, u32::saturating_add)
        };
        heights.insert(id, h);
    }

    let mut tops: BTreeMap<ElementId, u32> = BTreeMap::new();
    tops.insert(state.root_id(), 0);
    for &(id, _) in &walk {
        let el = state.get(id).expect("walked ids exist");
        let mut y = tops[&id];
        if id != state.root_id() {
            y = y.saturating_add(SECTION_PADDING);
        }
        for c in &el.children {
            tops.insert(*c, y);
            y = y.saturating_add(heights[c]);
        }
    }

    let synthetic_root = state.domain() == Domain::Mobile;
    state.with_bboxes(|id| {
        if synthetic_root && id == state.root_id() {
            return None;
        }
        let top = tops[&id];
        BoundingBox::new(0, vp.width, top, top.saturating_add(heights[&id])).ok()
    })
}
