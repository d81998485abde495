use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::actions::Direction;
use crate::axtree::{Domain, ElementId, Observation, UiState};

pub const WEB_WINDOW: (u32, u32) = (2400, 1080);
pub const MOBILE_WINDOW: (u32, u32) = (1080, 2400);

/// Visible window `[x_offset, x_offset + width] × [y_offset, y_offset + height]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Viewport {
    pub x_offset: u32,
    pub y_offset: u32,
    pub width: u32,
    pub height: u32,
}

impl Default for Viewport {
    fn default() -> Self {
        Self::web()
    }
}

impl Viewport {
    /// Panics if `width` or `height` is zero.
    pub fn new(x_offset: u32, y_offset: u32, width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "viewport must have a positive size");
        Self { x_offset, y_offset, width, height }
    }

    pub fn web() -> Self {
        Self::new(0, 0, WEB_WINDOW.0, WEB_WINDOW.1)
    }

    pub fn mobile() -> Self {
        Self::new(0, 0, MOBILE_WINDOW.0, MOBILE_WINDOW.1)
    }

    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Web => Self::web(),
            Domain::Mobile => Self::mobile(),
        }
    }

    /// Same window size at offset (0, 0).
    pub fn reset(self) -> Self {
        Self { x_offset: 0, y_offset: 0, ..self }
    }

    /// Offsets move by one window height (vertical) or width (horizontal);
    /// moves past the top or left edge clamp at 0.
    pub fn scrolled(self, direction: Direction) -> Self {
        let mut next = self;
        match direction {
            Direction::Down => next.y_offset = self.y_offset.saturating_add(self.height),
            Direction::Up => next.y_offset = self.y_offset.saturating_sub(self.height),
            Direction::Right => next.x_offset = self.x_offset.saturating_add(self.width),
            Direction::Left => next.x_offset = self.x_offset.saturating_sub(self.width),
        }
        next
    }

    pub fn bounds(&self) -> (u64, u64, u64, u64) {
        let x0 = u64::from(self.x_offset);
        let y0 = u64::from(self.y_offset);
        (x0, x0 + u64::from(self.width), y0, y0 + u64::from(self.height))
    }
}

/// Elements whose bounding box meets the viewport, in document order.
///
/// Elements without a box are kept when an ancestor or a descendant with a
/// box is visible, so structural wrappers travel with their content.
pub fn observe(state: &UiState, vp: &Viewport) -> Observation {
    let (x0, x1, y0, y1) = vp.bounds();
    let walk = state.walk();
    let hit = |id: ElementId| {
        state.get(id).and_then(|e| e.bbox).is_some_and(|b| b.intersects(x0, x1, y0, y1))
    };

    // descendant_hit[i]: some box-carrying descendant of walk[i] is visible
    let mut descendant_hit = alloc::vec![false; walk.len()];
    let mut open: Vec<usize> = Vec::new();
    for i in 0..walk.len() {
        let depth = walk[i].1;
        while let Some(&top) = open.last() {
            if walk[top].1 >= depth {
                open.pop();
            } else {
                break;
            }
        }
        if hit(walk[i].0) {
            for &anc in &open {
                descendant_hit[anc] = true;
            }
        }
        open.push(i);
    }

    let mut elements = Vec::new();
    // ancestor_hit tracked along the current path
    let mut path: Vec<(usize, bool)> = Vec::new(); // (depth, path has visible boxed element)
    for (i, &(id, depth)) in walk.iter().enumerate() {
        while matches!(path.last(), Some((d, _)) if *d >= depth) {
            path.pop();
        }
        let ancestor_hit = path.last().is_some_and(|(_, h)| *h);
        let own_box = state.get(id).and_then(|e| e.bbox).is_some();
        let self_hit = hit(id);
        let include = if own_box { self_hit } else { ancestor_hit || descendant_hit[i] };
        path.push((depth, ancestor_hit || self_hit));
        if include {
            elements.push(id);
        }
    }
    let rendered_text = state.serialize(Some(&elements)).expect("observed ids come from the state");
    Observation { elements, rendered_text }
}
