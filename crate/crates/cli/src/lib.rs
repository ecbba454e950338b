//! Command-line driver: argument parsing, config merging, report files.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use regio_forecast_core::synth::DEFAULT_ROWS;
use regio_forecast_core::RegionId;

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "regio-forecast",
    version,
    about = "Regional epidemic monitoring and PPE demand forecasts"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding one `<region>.csv` per region.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Region code (0-9) or name, e.g. `ontario`.
    #[arg(long, global = true)]
    pub case_study: Option<RegionId>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Weight multiplier for generic instances in the dedicated store.
    #[arg(long, global = true)]
    pub generic_weight: Option<f64>,
    #[arg(long, global = true)]
    pub test_days: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bootstrap replicates for the metric intervals.
    #[arg(long, global = true)]
    pub bootstrap: Option<usize>,
    /// Rank the 44 features by relevance and keep the top N instead of the
    /// fixed 13-feature list.
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    /// Train on a random subset of at most N case-study rows.
    #[arg(long, global = true)]
    pub case_train_limit: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report training time as 0 so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic regional CSV files.
    Synth {
        #[arg(long, default_value_t = 7)]
        regions: usize,
        #[arg(long, default_value_t = DEFAULT_ROWS)]
        rows: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
    },
    /// Train a case-study model and write the artifact.
    Train,
    /// Score one case study on its held-out days.
    Evaluate,
    /// Score every region in turn as the case study.
    Rotate,
    /// Predict daily counts from a feature CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Predict daily PPE-kit demand from a feature CSV.
    Ppe {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Operating capacity in [0, 1].
        #[arg(long)]
        capacity: Option<f64>,
        #[arg(long)]
        personnel: Option<u64>,
        /// CSV with `date,operating_capacity,personnel`, one row per input day.
        #[arg(long)]
        staffing: Option<PathBuf>,
    },
    /// Score all 44 features against the four targets.
    Relevance,
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let c = &self.common;
        let (capacity, personnel) = match &self.command {
            Command::Ppe {
                capacity, personnel, ..
            } => (*capacity, *personnel),
            _ => (None, None),
        };
        let cfg = RunConfig::load(c.config.as_deref())?.apply(Overrides {
            data_dir: c.data_dir.clone(),
            case_study: c.case_study,
            k: c.k,
            generic_weight: c.generic_weight,
            test_days: c.test_days,
            seed: c.seed,
            bootstrap: c.bootstrap,
            top_n: c.top_n,
            case_train_limit: c.case_train_limit,
            out: c.out.clone(),
            no_timing: c.no_timing,
            operating_capacity: capacity,
            personnel,
        });
        Ok(cfg)
    }
}

/// Runs the parsed command; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Synth { regions, rows, noise } => commands::cmd_synth(&cfg, *regions, *rows, *noise),
        Command::Train => commands::cmd_train(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Rotate => commands::cmd_rotate(&cfg),
        Command::Predict { model, input } => commands::cmd_predict(&cfg, model, input),
        Command::Ppe {
            model,
            input,
            staffing,
            ..
        } => commands::cmd_ppe(&cfg, model, input, staffing.as_deref()),
        Command::Relevance => commands::cmd_relevance(&cfg),
    }
}
