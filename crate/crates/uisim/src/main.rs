use clap::Parser;
use uisim::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("uisim: {e}");
        std::process::exit(e.exit_code());
    }
}
