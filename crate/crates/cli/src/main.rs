//! `hwid`: generate plant data, identify a Hammerstein-Wiener surrogate,
//! validate it and compare it with the plant in closed loop.
//!
//! Exit codes: 0 success, 1 i/o, 2 configuration, 3 data, 4 search
//! exhaustion, 5 validation failure, 6 divergence.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use commands::Context;
use config::RunConfig;

#[derive(Debug, Error)]
pub enum Failure {
    #[error("i/o: {0}")]
    Io(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("search exhausted: {0}")]
    Exhausted(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("divergence: {0}")]
    Divergence(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Exhausted(_) => 4,
            Failure::Validation(_) => 5,
            Failure::Divergence(_) => 6,
        }
    }

    /// Same kind, new message.
    pub fn with_message(self, msg: String) -> Self {
        match self {
            Failure::Io(_) => Failure::Io(msg),
            Failure::Config(_) => Failure::Config(msg),
            Failure::Data(_) => Failure::Data(msg),
            Failure::Exhausted(_) => Failure::Exhausted(msg),
            Failure::Validation(_) => Failure::Validation(msg),
            Failure::Divergence(_) => Failure::Divergence(msg),
        }
    }
}

/// Every global flag can also be set through an `HWID_` environment variable.
#[derive(Debug, Parser)]
#[command(name = "hwid", version, about = "Black-box identification of inverter dynamics")]
struct Cli {
    /// TOML run configuration; omitted fields take the mode's defaults.
    #[arg(long, global = true, env = "HWID_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, env = "HWID_SEED")]
    seed: Option<u64>,
    /// Search worker threads; 0 uses every core.
    #[arg(long, global = true, env = "HWID_WORKERS")]
    workers: Option<usize>,
    /// Root for all relative output paths.
    #[arg(long, global = true, env = "HWID_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the plant and write est.csv and val.csv.
    GenData,
    /// Search every output, validate, and write the model artifact.
    Identify {
        #[arg(long)]
        est: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Re-run fit and residual checks of an artifact on datasets.
    Validate {
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Dataset to check; repeatable. Defaults to the validation record.
        #[arg(long = "dataset")]
        datasets: Vec<PathBuf>,
    },
    /// Compare plant and model in the closed-loop microgrid scene.
    Simulate {
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
    /// Write correlation tables and figures for each output.
    Report {
        #[arg(long)]
        artifact: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(w) = cli.workers {
        config.identify.workers = w;
    }
    let ctx = Context {
        config,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Identify { est, val } => commands::identify_cmd(&ctx, est, val),
        Command::Validate { artifact, datasets } => commands::validate(&ctx, artifact, datasets),
        Command::Simulate { artifact } => commands::simulate(&ctx, artifact),
        Command::Report { artifact, dataset } => commands::report(&ctx, artifact, dataset),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
