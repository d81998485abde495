//! Entity-swapped siblings of target trajectories.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::actions::{parse_action, render_action, Action};
use crate::axtree::{ElementId, UiState, MOBILE_ROOT_ID};
use crate::client::ChatClient;
use crate::prompt::{list_items, names, sections, TemplateSet};
use crate::simulator::{Simulator, StepFailure};
use crate::transition::{BrowsingSession, ModelTransition, TransitionError, TransitionRequest, Viewport, WorldModel};
use crate::wrapper::{quality_filter, TracePoint, TrajectoryRecord, TrajectoryStep, Wrapper};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("variant of {task_id} rejected: {reason}")]
pub struct VariantRejected {
    pub task_id: String,
    pub reason: String,
}

/// Parsed teacher rewrite: new task, one summary and one action per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantPlan {
    pub instruction: String,
    pub summaries: Vec<String>,
    pub actions: Vec<Action>,
}

pub fn parse_variant(reply: &str, original: &TrajectoryRecord) -> Result<VariantPlan, String> {
    let secs = sections(reply, &["Task", "New browsing history", "New actions"]);
    let instruction = secs.get("Task").filter(|t| !t.is_empty()).ok_or("reply had no Task")?.clone();
    let summaries = secs.get("New browsing history").map(|s| list_items(s)).unwrap_or_default();
    let raw_actions = secs.get("New actions").map(|s| list_items(s)).unwrap_or_default();
    let n = original.steps.len();
    if summaries.len() != n || raw_actions.len() != n {
        return Err(alloc::format!(
            "expected {n} steps, got {} summaries and {} actions",
            summaries.len(),
            raw_actions.len()
        ));
    }
    let actions = raw_actions
        .iter()
        .map(|a| parse_action(a.trim_matches('`'), original.domain).map_err(|e| alloc::format!("unusable action `{a}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    let new_verbs: Vec<&str> = actions.iter().map(Action::verb).collect();
    if new_verbs != original.verb_sequence() {
        return Err("the action kinds differ from the original".into());
    }
    Ok(VariantPlan { instruction: instruction.lines().next().unwrap_or("").trim().to_string(), summaries, actions })
}

/// Role and rank among same-role elements in document order.
fn slot_of(state: &UiState, id: ElementId) -> Option<(String, usize)> {
    let role = &state.get(id)?.role;
    let rank = state
        .document_order()
        .into_iter()
        .take_while(|i| *i != id)
        .filter(|i| state.get(*i).is_some_and(|e| &e.role == role))
        .count();
    Some((role.clone(), rank))
}

fn element_at_slot(state: &UiState, role: &str, rank: usize) -> Option<ElementId> {
    state.document_order().into_iter().filter(|i| state.get(*i).is_some_and(|e| e.role == role)).nth(rank)
}

fn first_real_id(state: &UiState) -> u32 {
    state.elements().map(|e| e.id.0).filter(|&i| i != MOBILE_ROOT_ID.0).min().unwrap_or(0)
}

/// Regenerates each model-driven state from the matching original state.
struct Regrounded<'a, 'b, C: ?Sized> {
    simulator: Simulator<'a, C>,
    original: &'b [TracePoint],
    summaries: &'b [String],
}

impl<C: ChatClient + ?Sized> WorldModel for Regrounded<'_, '_, C> {
    fn transition(&self, r: &TransitionRequest<'_>) -> Result<ModelTransition, StepFailure> {
        let step = r.history.len();
        let reference = &self.original[(step + 1).min(self.original.len() - 1)].state;
        let description = self.summaries.get(step).map_or("", String::as_str);
        let next_state = self.simulator.regenerate_state(reference, description, r.key_info, r.id_floor, &r.viewport)?;
        Ok(ModelTransition { next_state, is_new_page: true, key_info_update: None, retrieved: None })
    }
}

/// Builds one sibling of `original`. The teacher swaps entity names, the
/// simulator rewrites every state using the original one as reference,
/// element ids are mapped over by role and rank, thoughts are rewritten for
/// the new task, and the result must pass the quality filter.
pub fn synthesize_variant<T, S>(
    original: &TrajectoryRecord,
    new_id: String,
    teacher: &T,
    simulator: Simulator<'_, S>,
    templates: &TemplateSet,
) -> Result<TrajectoryRecord, VariantRejected>
where
    T: ChatClient + ?Sized,
    S: ChatClient + ?Sized,
{
    let reject = |reason: String| VariantRejected { task_id: original.id.clone(), reason };
    if original.trace.len() != original.steps.len() + 1 {
        return Err(reject("original has no state trace".into()));
    }
    if !quality_filter(original, &original.trace).pass() {
        return Err(reject("original does not pass the quality filter".into()));
    }
    let domain = original.domain;
    let history = original.history();
    let actions_text = original.steps.iter().enumerate().map(|(i, s)| alloc::format!("{}. {}", i + 1, s.action)).collect::<Vec<_>>().join("\n");
    let prompt = templates
        .render(domain, names::VARIANT, &[("instruction", &original.instruction), ("history", &history.render()), ("actions", &actions_text)])
        .map_err(|e| reject(e.to_string()))?;
    let reply = teacher.complete(&prompt).map_err(|e| reject(e.to_string()))?;
    let plan = parse_variant(&reply, original).map_err(reject)?;

    let viewport = Viewport::for_domain(domain);
    let start = &original.trace[0].state;
    let initial = simulator
        .regenerate_state(start, &plan.instruction, "", first_real_id(start), &viewport)
        .map_err(|e| reject(alloc::format!("initial state: {e}")))?;
    let world = Regrounded { simulator, original: &original.trace, summaries: &plan.summaries };

    let originals = original.actions().map_err(|e| reject(e.to_string()))?;
    let mut session = BrowsingSession::new(initial);
    let mut trace = Vec::with_capacity(original.trace.len());
    let mut steps = Vec::with_capacity(plan.actions.len());
    let mut history = crate::actions::ActionHistory::new();
    for (i, (action, summary)) in plan.actions.iter().zip(&plan.summaries).enumerate() {
        let observation = session.observation();
        let action = match originals[i].target() {
            Some(old) => {
                let (role, rank) = slot_of(&original.trace[i].state, old).ok_or_else(|| reject(alloc::format!("step {i}: original target missing")))?;
                let new = element_at_slot(session.state(), &role, rank)
                    .ok_or_else(|| reject(alloc::format!("step {i}: no {role} #{rank} in the regenerated state")))?;
                action.with_target(new)
            }
            None => action.clone(),
        };
        trace.push(TracePoint { state: session.state().clone(), observation: observation.rendered_text.clone() });
        steps.push((String::new(), action.clone(), summary.clone()));
        if !action.is_stop() {
            session = match session.step(&action, &history, "", &world) {
                Ok(out) => out.session,
                Err(TransitionError::Simulator(f)) => return Err(reject(alloc::format!("step {i}: {f}"))),
                Err(e) => return Err(reject(alloc::format!("step {i}: {e}"))),
            };
        }
        history.push(String::new(), action, summary.clone());
    }
    trace.push(TracePoint { state: session.state().clone(), observation: session.observation().rendered_text });

    let wrapper = Wrapper::new(teacher, templates);
    let thoughts = wrapper.rewrite_thoughts(domain, &steps, &plan.instruction).map_err(|e| reject(e.to_string()))?;
    let record = TrajectoryRecord {
        id: new_id,
        schema_version: original.schema_version.clone(),
        instruction: plan.instruction,
        domain,
        steps: steps
            .into_iter()
            .zip(thoughts)
            .enumerate()
            .map(|(i, ((_, a, summary), thought))| TrajectoryStep {
                observation: trace[i].observation.clone(),
                thought,
                action: render_action(&a),
                summary,
            })
            .collect(),
        provenance: original.provenance.clone(),
        trace,
    };
    let verdict = quality_filter(&record, &record.trace);
    if !verdict.pass() {
        let kinds: Vec<&str> = verdict.flags.iter().map(|f| f.kind.as_str()).collect();
        return Err(reject(alloc::format!("filter flags {}", kinds.join(","))));
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axtree::parse_web_tree;

    #[test]
    fn slots_follow_document_order() {
        let a = parse_web_tree("[1] RootWebArea 'a'\n\t[2] link 'x'\n\t[3] button 'b'\n\t[4] link 'y'").unwrap();
        let b = parse_web_tree("[10] RootWebArea 'b'\n\t[11] link 'p'\n\t[12] link 'q'").unwrap();
        let (role, rank) = slot_of(&a, ElementId(4)).unwrap();
        assert_eq!((role.as_str(), rank), ("link", 1));
        assert_eq!(element_at_slot(&b, &role, rank), Some(ElementId(12)));
        assert_eq!(element_at_slot(&b, "button", 0), None);
    }
}
