#![allow(dead_code)]

use std::path::{Path, PathBuf};

use uisim::commands::{cmd_rollout, cmd_wrap};
use uisim::config::RunConfig;
use uisim::io::read_jsonl;
use uisim_core::rollout::Site;
use uisim_core::wrapper::TrajectoryRecord;

/// Scripted rollout plus wrap into `dir`; returns the run dir.
pub fn scripted_run(dir: &Path, site: Site, rollouts: usize, seed: u64) -> PathBuf {
    let mut cfg = RunConfig::new(site, dir);
    cfg.budgets.rollouts = rollouts;
    cfg.seed = seed;
    let run = cmd_rollout(&cfg).unwrap();
    cmd_wrap(&run, None).unwrap();
    run
}

pub fn dataset(run: &Path) -> Vec<TrajectoryRecord> {
    read_jsonl(&run.join(uisim::commands::DATASET_FILE)).unwrap()
}
