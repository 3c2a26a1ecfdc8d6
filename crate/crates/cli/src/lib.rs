//! Command-line front end for the affine HJM library. Configuration loading
//! lives in [`config`], artifact writers in [`output`].
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 validation
//! failure, 3 numerical failure, 4 acceptance criteria failed.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, CliResult};
pub use output::{OutputDir, Provenance};

#[derive(Debug, Parser)]
#[command(name = "affine-hjm", version, about = "Affine HJM term-structure models on the PSD cone")]
pub struct Cli {
    /// JSON configuration; the bundled default when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for the artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for path simulation.
    #[arg(long, global = true, env = "AFFINE_HJM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the parameter set and every section of the configuration.
    Validate,
    /// Simulate state paths and summarise the ensemble.
    Simulate,
    /// Solve the Riccati system for the configured transform argument.
    Riccati,
    /// Evolve forward curves and check the bond martingale property.
    Curve,
    /// Long-term yield trajectories, drift and yield ladders.
    Longterm,
    /// Run the acceptance suite.
    Accept {
        /// Run only these criteria (comma separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

/// Runs one invocation and returns the lines to print.
pub fn run(cli: &Cli) -> CliResult<commands::Report> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = LoadedConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let seed = match cli.command {
        Command::Accept { .. } => cfg.config.accept.seed,
        _ => cfg.config.mc_settings.seed,
    };
    let out = OutputDir::create(
        &cli.out,
        Provenance {
            config_sha256: cfg.sha256.clone(),
            seed,
        },
    )?;
    match &cli.command {
        Command::Validate => commands::run_validate(&cfg, &out),
        Command::Simulate => commands::run_simulate(&cfg, &out),
        Command::Riccati => commands::run_riccati(&cfg, &out),
        Command::Curve => commands::run_curve(&cfg, &out),
        Command::Longterm => commands::run_longterm(&cfg, &out),
        Command::Accept { only } => commands::run_accept(&cfg, &out, only),
    }
}
