//! Command-line drivers: Fig. 1 curves, method comparisons against the
//! exact propagator, localization sweeps and single flow runs.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use commands::{Artifact, CommandError, Outcome, Status};
pub use config::{ConfigError, Resolved};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "floquet-flow",
    version,
    about = "Effective Hamiltonians of periodically driven systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<String>,
    /// Worker threads for sweep points; 0 means one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Reserved. All computations are deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// J0(x) and beta(x) curves with their zeros.
    Fig1,
    /// All methods against the monodromy oracle, per sweep point.
    Compare,
    /// Stroboscopic return probabilities along a sweep over x.
    Localize,
    /// One flow run with its convergence trace and H_eff.
    FlowRun,
}

impl Command {
    fn needs_config(self) -> bool {
        !matches!(self, Command::Fig1)
    }
}

pub fn resolve(cli: &Cli) -> Result<Resolved, ConfigError> {
    let raw = match &cli.config {
        Some(p) => config::load(p)?,
        None if cli.command.needs_config() => {
            return Err(ConfigError::Invalid("--config is required for this subcommand".into()))
        }
        None => config::RawConfig::default(),
    };
    config::resolve(&raw, cli.out.as_deref(), cli.seed)
}

pub fn execute(command: Command, config: &Resolved) -> Result<Outcome, CommandError> {
    match command {
        Command::Fig1 => commands::fig1(config),
        Command::Compare => commands::compare(config),
        Command::Localize => commands::localize(config),
        Command::FlowRun => commands::flow_run(config),
    }
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let outcome = match pool.install(|| execute(cli.command, &config)) {
        Ok(o) => o,
        Err(CommandError::Config(e)) => {
            eprintln!("error: invalid config: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let dir = Path::new(&config.output.directory);
    if let Err(e) = write_artifacts(dir, &outcome.artifacts) {
        eprintln!("error: writing {}: {e}", dir.display());
        return EXIT_NUMERICAL;
    }
    for a in &outcome.artifacts {
        eprintln!("wrote {}", dir.join(&a.name).display());
    }
    match outcome.status {
        Status::Complete => EXIT_OK,
        Status::Incomplete => {
            eprintln!("warning: some computations failed; see the report");
            EXIT_NUMERICAL
        }
    }
}
