use alloc::string::String;
use alloc::vec::Vec;

use crate::axtree::{AxTreeError, Domain, ElementId, UiElement, UiState};

fn heading(el: &UiElement) -> Option<String> {
    let h = el.content.as_deref().or_else(|| el.attributes.get("content_description"))?.trim();
    (!h.is_empty()).then(|| h.to_lowercase())
}

fn same_slot(domain: Domain, a: &UiElement, b: &UiElement) -> bool {
    let key = heading(a);
    key.is_some() && key == heading(b) && (domain == Domain::Web || a.role == b.role)
}

/// Folds a partial update into `current`.
///
/// Each top-level child of `delta` replaces the top-level child of `current`
/// whose heading (content, or mobile `content_description`) matches it
/// case-insensitively; on mobile the class names must match too. Unmatched
/// children are appended. The root of `delta` is dropped. `delta` ids must
/// not collide with ids of `current`.
pub fn merge_partial(current: &UiState, delta: &UiState) -> Result<UiState, AxTreeError> {
    let domain = current.domain();
    let mut out = current.clone();
    let mut available: Vec<ElementId> = current.root().children.clone();
    for child in &delta.root().children {
        let new_el = delta.get(*child).expect("child exists");
        let hit = available
            .iter()
            .position(|id| same_slot(domain, current.get(*id).expect("child exists"), new_el));
        out = match hit {
            Some(pos) => {
                let target = available.remove(pos);
                out.with_subtree_replaced(target, delta, *child)?
            }
            None => out.with_subtree_appended(delta, *child)?,
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axtree::parse_mobile_elements;

    #[test]
    fn mobile_matches_on_class_and_label() {
        let cur = parse_mobile_elements(
            "Element 0: UIElement(text=Alarm 7:00, class_name=android.widget.Switch, is_checked=False)\nElement 1: UIElement(text=Add alarm, class_name=android.widget.Button)",
        )
        .unwrap();
        let delta = parse_mobile_elements(
            "Element 5: UIElement(text=alarm 7:00, class_name=android.widget.Switch, is_checked=True)\nElement 6: UIElement(text=Alarm 7:00, class_name=android.widget.TextView)",
        )
        .unwrap();
        let m = merge_partial(&cur, &delta).unwrap();
        let ids: Vec<u32> = m.root().children.iter().map(|i| i.0).collect();
        assert_eq!(ids, [5, 1, 6]);
        assert_eq!(m.get(ElementId(5)).unwrap().attributes.get("is_checked"), Some("True"));
    }
}
