//! Experiment runner for spiking nonnegative similarity matching: the
//! random-instance benchmark, training runs, feature images and tuning
//! tables. The `snsm` binary is a thin wrapper over [`run`].

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "snsm", version, about = "Spiking nonnegative similarity matching experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (flat TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct WithState {
    #[command(flatten)]
    pub common: Common,
    /// Trained state file.
    #[arg(long)]
    pub state: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spiking and rate solvers against the oracle on random instances.
    Bench(Common),
    /// Online training; writes the state file and the checkpoint log.
    Train(Common),
    /// Renders the rows of W as a PGM image grid.
    Features(WithState),
    /// Tuning curves of a trained ring network.
    Tuning(WithState),
    /// Solves a single benchmark instance and dumps its spike raster.
    Oracle(Common),
}

fn resolve(common: &Common) -> CliResult<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))?;
    Ok((cfg, out))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Bench(c) => {
            let (cfg, out) = resolve(c)?;
            commands::cmd_bench(&cfg, &out).map(drop)
        }
        Command::Train(c) => {
            let (cfg, out) = resolve(c)?;
            commands::cmd_train(&cfg, &out).map(drop)
        }
        Command::Features(w) => {
            let (cfg, out) = resolve(&w.common)?;
            commands::cmd_features(&cfg, &w.state, &out).map(drop)
        }
        Command::Tuning(w) => {
            let (cfg, out) = resolve(&w.common)?;
            commands::cmd_tuning(&cfg, &w.state, &out).map(drop)
        }
        Command::Oracle(c) => {
            let (cfg, out) = resolve(c)?;
            commands::cmd_oracle(&cfg, &out).map(drop)
        }
    }
}
