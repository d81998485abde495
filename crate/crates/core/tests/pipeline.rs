use uisim_core::client::mock::{HashedLogprob, NgramEmbedder};
use uisim_core::grow::{bootstrap, run_iteration, GrowClients, GrowConfig};
use uisim_core::prompt::TemplateSet;
use uisim_core::rollout::{run_rollout, RolloutConfig, Site, Teacher, TerminatedBy};
use uisim_core::scripted::{seed_state, ScriptedLlm};
use uisim_core::simulator::{LlmWorldModel, SimulationMode, Simulator};
use uisim_core::wrapper::{quality_filter, TrajectoryRecord, Wrapper};

fn wrapped(site: Site, n: usize, fused: bool) -> (Vec<TrajectoryRecord>, usize) {
    let llm = ScriptedLlm::default();
    let templates = TemplateSet::builtin();
    let teacher = Teacher::new(&llm, &templates);
    let world = LlmWorldModel::retrieval_free(Simulator::new(&llm, &templates).fused(fused));
    let wrapper = Wrapper::new(&llm, &templates);
    let mut out = Vec::new();
    let mut dropped = 0;
    for i in 0..n {
        let raw = run_rollout(seed_state(site, i), &RolloutConfig::for_site(site), &teacher, &world, i as u64).unwrap();
        match wrapper.wrap(&raw, format!("{}-{i:04}", site.as_str()), SimulationMode::RetrievalFree, "scripted") {
            Ok(r) => out.push(r),
            Err(e) => {
                eprintln!("{}-{i}: {:?} {e}", site.as_str(), raw.terminated_by);
                dropped += 1
            }
        }
    }
    (out, dropped)
}

#[test]
fn scripted_rollouts_wrap_cleanly() {
    for site in Site::ALL {
        let (records, dropped) = wrapped(site, 6, false);
        assert_eq!(dropped, 0, "{site:?}");
        for r in &records {
            assert!(quality_filter(r, &r.trace).pass());
            assert!(!r.instruction.is_empty());
        }
    }
}

#[test]
fn stop_terminates_scripted_rollouts() {
    let llm = ScriptedLlm::default();
    let templates = TemplateSet::builtin();
    let world = LlmWorldModel::retrieval_free(Simulator::new(&llm, &templates));
    let raw = run_rollout(seed_state(Site::Shopping, 0), &RolloutConfig::for_site(Site::Shopping), &Teacher::new(&llm, &templates), &world, 0).unwrap();
    assert_eq!(raw.terminated_by, TerminatedBy::Stop);
}

#[test]
fn grow_iterations_run() {
    let (mut base, _) = wrapped(Site::Shopping, 30, false);
    base.extend(wrapped(Site::Android, 30, false).0);
    let llm = ScriptedLlm::default();
    let templates = TemplateSet::builtin();
    let cfg = GrowConfig::default();
    let clients = GrowClients {
        teacher: &llm,
        simulator: Simulator::new(&llm, &templates),
        scorer: &HashedLogprob::default(),
        embedder: &NgramEmbedder::default(),
        templates: &templates,
    };
    let (mut state, _) = bootstrap(&base, &cfg).unwrap();
    for _ in 0..3 {
        let (next, m) = run_iteration(&state, &base, &clients, &cfg).unwrap();
        eprintln!("{:?}", (m.iteration, m.target_ids.len(), m.variant_ids.len(), &m.rejected_variants, m.replay_ids.len(), m.base_consumed));
        assert!(!m.variant_ids.is_empty());
        state = next;
    }
}

