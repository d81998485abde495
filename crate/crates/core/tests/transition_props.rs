use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uisim_core::actions::{Action, ActionHistory, Direction};
use uisim_core::axtree::{Domain, ElementId};
use uisim_core::simulator::StepFailure;
use uisim_core::testing::random_state;
use uisim_core::transition::{BrowsingSession, ModelTransition, TransitionError, TransitionRequest, Viewport, WorldModel};

/// Answers every request with a fresh random page above the id floor.
struct RandomPages(u64);

impl WorldModel for RandomPages {
    fn transition(&self, r: &TransitionRequest<'_>) -> Result<ModelTransition, StepFailure> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0 ^ u64::from(r.id_floor));
        let s = random_state(&mut rng, r.state.domain(), 12).renumbered(r.id_floor).unwrap();
        Ok(ModelTransition { next_state: s, is_new_page: true, key_info_update: None, retrieved: None })
    }
}

fn clicked(s: &BrowsingSession, seed: u64) -> BrowsingSession {
    let id = s.state().root_id();
    s.step(&Action::Click { id }, &ActionHistory::new(), "", &RandomPages(seed)).unwrap().session
}

#[test]
fn scroll_down_from_origin() {
    let vp = Viewport::new(0, 0, 2400, 1080).scrolled(Direction::Down);
    assert_eq!((vp.x_offset, vp.y_offset), (0, 1080));
}

#[test]
fn forward_needs_a_prior_back() {
    let s = BrowsingSession::new(random_state(&mut ChaCha8Rng::seed_from_u64(1), Domain::Web, 10));
    assert_eq!(s.apply_rule(&Action::GoForward).unwrap_err(), TransitionError::ForwardUnavailable);
    let s = clicked(&s, 7);
    assert_eq!(s.apply_rule(&Action::GoForward).unwrap_err(), TransitionError::ForwardUnavailable);
    let (back, _) = s.apply_rule(&Action::GoBack).unwrap();
    assert!(back.apply_rule(&Action::GoForward).is_ok());
    // a new navigation after going back discards the forward pointer
    let forked = clicked(&back, 8);
    assert_eq!(forked.apply_rule(&Action::GoForward).unwrap_err(), TransitionError::ForwardUnavailable);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn scroll_leaves_state_alone(seed in any::<u64>(), dirs in prop::collection::vec(0usize..4, 1..8), mobile in any::<bool>()) {
        let domain = if mobile { Domain::Mobile } else { Domain::Web };
        let mut s = BrowsingSession::new(random_state(&mut ChaCha8Rng::seed_from_u64(seed), domain, 20));
        let state0 = s.state().clone();
        for d in dirs {
            let direction = Direction::ALL[d];
            let before = s.viewport();
            let (next, handled) = s.apply_rule(&Action::Scroll { direction }).unwrap();
            prop_assert!(handled);
            prop_assert_eq!(next.state(), &state0);
            prop_assert_eq!(next.viewport(), before.scrolled(direction));
            prop_assert_eq!(next.history_len(), s.history_len());
            s = next;
        }
    }

    #[test]
    fn typing_appends(seed in any::<u64>(), text in "[a-zA-Z0-9 ,.-]{0,12}", mobile in any::<bool>()) {
        let domain = if mobile { Domain::Mobile } else { Domain::Web };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = random_state(&mut rng, domain, 20);
        let ids: Vec<ElementId> = state.elements().map(|e| e.id).filter(|id| !mobile || *id != state.root_id()).collect();
        prop_assume!(!ids.is_empty());
        let id = ids[rng.random_range(0..ids.len())];
        let s = BrowsingSession::new(state.clone());
        let action = if mobile {
            Action::InputText { id, text: text.clone() }
        } else {
            Action::Type { id, text: text.clone(), press_enter: false }
        };
        let (next, handled) = s.apply_rule(&action).unwrap();
        prop_assert!(handled);
        let (old, new) = (state.get(id).unwrap(), next.state().get(id).unwrap());
        let field = |e: &uisim_core::axtree::UiElement| if mobile {
            e.attributes.get("content_description").unwrap_or("").to_string()
        } else {
            e.content_str().to_string()
        };
        prop_assert_eq!(field(new), format!("{}{}", field(old), text));
        for e in state.elements().filter(|e| e.id != id) {
            prop_assert_eq!(next.state().get(e.id).unwrap(), e);
        }
        prop_assert_eq!(next.viewport(), s.viewport());
    }

    #[test]
    fn back_then_forward_is_identity(seed in any::<u64>(), hops in 1usize..5, scroll in any::<bool>()) {
        let mut s = BrowsingSession::new(random_state(&mut ChaCha8Rng::seed_from_u64(seed), Domain::Web, 10));
        for h in 0..hops {
            s = clicked(&s, seed.wrapping_add(h as u64));
        }
        if scroll {
            s = s.apply_rule(&Action::Scroll { direction: Direction::Down }).unwrap().0;
        }
        let (back, _) = s.apply_rule(&Action::GoBack).unwrap();
        prop_assert_ne!(back.state(), s.state());
        let (fwd, _) = back.apply_rule(&Action::GoForward).unwrap();
        prop_assert_eq!(fwd.state(), s.state());
        prop_assert_eq!(fwd.viewport(), s.viewport());
        prop_assert_eq!(fwd.observation(), s.observation());
    }

    #[test]
    fn model_steps_reset_offsets_and_keep_ids_fresh(seed in any::<u64>()) {
        let s = BrowsingSession::new(random_state(&mut ChaCha8Rng::seed_from_u64(seed), Domain::Web, 10));
        let scrolled = s.apply_rule(&Action::Scroll { direction: Direction::Down }).unwrap().0;
        let next = clicked(&scrolled, seed);
        prop_assert_eq!((next.viewport().x_offset, next.viewport().y_offset), (0, 0));
        let old: Vec<u32> = s.state().elements().map(|e| e.id.0).collect();
        prop_assert!(next.state().elements().all(|e| !old.contains(&e.id.0)));
    }
}

#[test]
fn tabs() {
    let s = BrowsingSession::new(random_state(&mut ChaCha8Rng::seed_from_u64(3), Domain::Web, 10));
    assert_eq!(s.apply_rule(&Action::CloseTab).unwrap_err(), TransitionError::LastTabClose);
    let (two, _) = s.apply_rule(&Action::NewTab).unwrap();
    assert_eq!((two.tab_count(), two.active_tab()), (2, 1));
    let (first, _) = two.apply_rule(&Action::TabFocus { index: 0 }).unwrap();
    assert_eq!(first.state(), s.state());
    assert!(matches!(two.apply_rule(&Action::TabFocus { index: 2 }), Err(TransitionError::TabOutOfRange { .. })));
}
