//! Command-line front end: config handling, subcommands and figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig, DATA_ROOT_ENV};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "forecast", version, about = "Gridded weather forecasting toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for initialization and batch order.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model name, or a comma-separated list.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Directory relative data paths are resolved against.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Read and validate grid and station inputs.
    Ingest,
    /// Station observations onto a grid with cross-validated IDW.
    Interpolate,
    /// Flow fields and perturbation diagnostics.
    Flow,
    /// Rolling-window training of the selected models.
    Train,
    /// Score trained checkpoints on the test splits.
    Evaluate,
    /// Forecast from one input window with a checkpoint.
    Predict,
    /// Feature correlations and lagged trends.
    Eda,
    /// Redraw figures from the CSVs of a run directory.
    Plot,
}

/// Runs one command and returns its run directory.
pub fn run(cli: &Cli) -> CliResult<PathBuf> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        model: cli.model.clone(),
    };
    let cfg = cfg.effective(&overrides, cli.data_root.as_deref())?;
    let dir = commands::RunDir::create(&cfg)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg, &dir),
        Command::Interpolate => commands::interpolate(&cfg, &dir),
        Command::Flow => commands::flow(&cfg, &dir),
        Command::Train => commands::train(&cfg, &dir),
        Command::Evaluate => commands::evaluate(&cfg, &dir),
        Command::Predict => commands::predict(&cfg, &dir),
        Command::Eda => commands::eda(&cfg, &dir),
        Command::Plot => {
            let src = cfg.plot.run_dir.as_deref().unwrap_or(&dir.path);
            let n = commands::figures::redraw(src, &dir.path, cfg.plot.cell_px)?;
            if n == 0 {
                return Err(CliError::data(format!("no plottable CSVs in {}", src.display())));
            }
            Ok(())
        }
    }?;
    Ok(dir.path)
}
