//! `frs` — measure how stably a language model retains facts by sweeping
//! sampling temperature and scoring each answer's Factual Robustness Score.

mod artifacts;
mod commands;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use frs_core::config::RunConfig;
use frs_core::protocol::SweepMode;

#[derive(Parser)]
#[command(
    name = "frs",
    version,
    about = "Factual robustness evaluation: entropy, breaking temperature, and FRS"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Evaluate the full temperature grid per sample.
    Linear,
    /// Binary-search the grid for the breaking temperature.
    Binary,
}

impl From<ModeArg> for SweepMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Linear => SweepMode::Linear,
            ModeArg::Binary => SweepMode::Binary,
        }
    }
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured number of trials per temperature.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the configured run seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    /// Load the config and apply overrides; the config hash covers the
    /// effective settings, so every stage of a run must use the same flags.
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(trials) = self.trials {
            config.sweep.trials_per_temperature = trials;
        }
        if let Some(seed) = self.seed {
            config.sweep.run_seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Find questions the model answers exactly right at t=0.
    Select {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Measure per-temperature accuracy and breaking temperatures.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Full-grid sweep or binary search per sample.
        #[arg(long, value_enum, default_value = "linear")]
        mode: ModeArg,
        /// Continue an interrupted run from its persisted state.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate the run state into plot-ready report files.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Re-derive every aggregate from the emitted per-sample rows and
        /// verify the files match byte for byte.
        #[arg(long)]
        audit: bool,
    },
    /// Run the offline property and oracle checks.
    Validate,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select { config } => config.load().and_then(|c| commands::cmd_select(&c)),
        Command::Sweep {
            config,
            mode,
            resume,
        } => config
            .load()
            .and_then(|c| commands::cmd_sweep(&c, mode.into(), resume)),
        Command::Report { config, audit } => {
            config.load().and_then(|c| commands::cmd_report(&c, audit))
        }
        Command::Validate => commands::cmd_validate(),
    };
    if let Err(error) = result {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}
