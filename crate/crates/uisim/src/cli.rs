//! Argument parsing and dispatch for the `uisim` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use uisim_core::rollout::Site;
use uisim_core::simulator::SimulationMode;

use crate::annotation::{router, serve, AppState};
use crate::commands::{cmd_build_corpus, cmd_diversity, cmd_grow, cmd_rollout, cmd_wrap, CliError};
use crate::config::{BackendKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "uisim", version, about = "Synthesize UI agent trajectories with a simulated environment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run teacher-guided rollouts in the simulated environment.
    Rollout {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Turn a run's raw rollouts into a filtered trajectory dataset.
    Wrap {
        #[arg(long)]
        run_dir: PathBuf,
        /// Defaults to the run's own config.toml.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build a transition corpus from raw rollouts.
    BuildCorpus {
        #[arg(long = "run-dir", required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one targeted-scaling iteration.
    Grow {
        #[command(flatten)]
        run: RunArgs,
        /// Base dataset files (JSON lines).
        #[arg(long = "base", required = true)]
        base: Vec<PathBuf>,
        #[arg(long)]
        grow_dir: PathBuf,
        #[arg(long)]
        iteration: usize,
    },
    /// PCA effective dimension of dataset instructions.
    Diversity {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
    },
    /// Serve the annotation API (and optionally the built UI bundle).
    ServeAnnotation {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Journal of submitted annotations, replayed on start.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

/// A config file, flag overrides, or both.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Site: shopping, gitlab, map, reddit, shopping_admin or android.
    #[arg(long)]
    pub domain: Option<Site>,
    #[arg(long = "out")]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<SimulationMode>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub controls_per_proposal: Option<usize>,
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    #[arg(long)]
    pub start_pages: Option<PathBuf>,
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<BackendKind>,
    /// Replay file: strict source for `--backend replay`, capture target otherwise.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<SimulationMode, String> {
    match s {
        "retrieval_free" => Ok(SimulationMode::RetrievalFree),
        "retrieval_augmented" => Ok(SimulationMode::RetrievalAugmented),
        _ => Err(format!("unknown mode `{s}` (retrieval_free or retrieval_augmented)")),
    }
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "scripted" => Ok(BackendKind::Scripted),
        "http" => Ok(BackendKind::Http),
        "replay" => Ok(BackendKind::Replay),
        _ => Err(format!("unknown backend `{s}` (scripted, http or replay)")),
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, self.domain) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(site)) => RunConfig::new(site, self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))),
            (None, None) => return Err(CliError::Config("give --config or --domain".into())),
        };
        if let Some(v) = self.domain {
            cfg.domain = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = &self.corpus {
            cfg.corpus = Some(v.clone());
        }
        if let Some(v) = self.rollouts {
            cfg.budgets.rollouts = v;
        }
        if let Some(v) = self.max_steps {
            cfg.budgets.max_steps = Some(v);
        }
        if let Some(v) = self.controls_per_proposal {
            cfg.budgets.controls_per_proposal = Some(v);
        }
        if let Some(v) = &self.template_dir {
            cfg.template_dir = Some(v.clone());
        }
        if let Some(v) = &self.start_pages {
            cfg.start_pages = Some(v.clone());
        }
        if let Some(v) = self.backend {
            cfg.backend.kind = v;
        }
        if let Some(v) = &self.replay {
            cfg.backend.replay = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{v}");
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rollout { run } => {
            let cfg = run.resolve()?;
            let dir = cmd_rollout(&cfg)?;
            print_json(&serde_json::json!({ "run_dir": dir }));
        }
        Command::Wrap { run_dir, config, workers } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::load(&run_dir.join(crate::commands::CONFIG_FILE))?,
            };
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let path = cmd_wrap(&run_dir, Some(&cfg))?;
            print_json(&serde_json::json!({ "dataset": path }));
        }
        Command::BuildCorpus { run_dirs, out } => {
            let n = cmd_build_corpus(&run_dirs, &out)?;
            print_json(&serde_json::json!({ "corpus": out, "records": n }));
        }
        Command::Grow { run, base, grow_dir, iteration } => {
            let mut run = run;
            if run.config.is_none() && run.domain.is_none() {
                // grow is site-agnostic; any site gives a valid default config
                run.domain = Some(Site::Shopping);
            }
            let cfg = run.resolve()?;
            let manifest = cmd_grow(&cfg, &base, &grow_dir, iteration)?;
            print_json(&serde_json::json!({ "manifest": manifest }));
        }
        Command::Diversity { run, datasets, threshold } => {
            let mut run = run;
            if run.config.is_none() && run.domain.is_none() {
                run.domain = Some(Site::Shopping);
            }
            let cfg = run.resolve()?;
            let report = cmd_diversity(&cfg, &datasets, threshold)?;
            print_json(&serde_json::to_value(report).expect("report serializes"));
        }
        Command::ServeAnnotation { dataset, host, port, annotations, static_dir } => {
            let app = AppState::load(&dataset, annotations)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(format!("starting runtime: {e}")))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| CliError::Config(format!("binding {host}:{port}: {e}")))?;
                let addr = listener.local_addr().map_err(|e| CliError::Config(e.to_string()))?;
                log::info!("annotation server listening on http://{addr}");
                serve(listener, router(app, static_dir.as_deref())).await.map_err(|e| CliError::Data(format!("server: {e}")))
            })?;
        }
    }
    Ok(())
}
