//! `mindiv`: estimators, embedding grids, synthetic experiments, portfolio
//! optimization and rolling backtests from the command line.
//!
//! Exit status is 0 on success, 1 when the numbers themselves fail (divergent
//! integrals, singular covariances, truncation failures) and 2 for usage,
//! configuration and I/O errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mindiv_core::backtest::Units;
use mindiv_core::{Bandwidth, DivergenceKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] mindiv_core::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mindiv", version, about = "Minimum-divergence portfolios: estimators, experiments and backtests")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file for the command's main result (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum UnitsArg {
    Percent,
    Decimal,
}

impl From<UnitsArg> for Units {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Percent => Units::Percent,
            UnitsArg::Decimal => Units::Decimal,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BandwidthArg {
    Fixed,
    SampleSd,
}

impl From<BandwidthArg> for Bandwidth {
    fn from(b: BandwidthArg) -> Self {
        match b {
            BandwidthArg::Fixed => Bandwidth::Fixed,
            BandwidthArg::SampleSd => Bandwidth::SampleSd,
        }
    }
}

fn parse_kind(s: &str) -> Result<DivergenceKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown estimator {s:?}"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one divergence estimator on a sample file and print JSON.
    Estimate {
        /// Sample, one value per line (first CSV column; a header is skipped).
        #[arg(long)]
        xs: PathBuf,
        /// Second sample for the two-sample estimators; target draws otherwise.
        #[arg(long)]
        ys: Option<PathBuf>,
        /// Estimator, e.g. mmd_semi_explicit_u, ksd_v, wasserstein.
        #[arg(long, value_parser = parse_kind)]
        kind: Option<DivergenceKind>,
    },
    /// Tabulate the analytic mean embedding on a grid as CSV.
    EmbedEval {
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Add the quadrature value and the absolute difference.
        #[arg(long)]
        oracle: bool,
    },
    /// Run a synthetic experiment (fig1, fig2, fig4, misspec, rate) and write
    /// per-repetition values as CSV.
    Experiment {
        name: String,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// fig4 only: keep the target-only term.
        #[arg(long)]
        keep_target_term: bool,
    },
    /// Minimize the configured divergence over portfolio weights.
    Optimize {
        /// Returns CSV: date column followed by one column per asset.
        #[arg(long)]
        returns: PathBuf,
        #[arg(long, value_enum, default_value = "decimal")]
        units: UnitsArg,
        #[arg(long, value_enum)]
        bandwidth: Option<BandwidthArg>,
        /// Where to write the per-iteration CEM trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Rolling-window backtest: bucket results as CSV, winner counts as JSON.
    Backtest {
        #[arg(long)]
        returns: PathBuf,
        #[arg(long, value_enum, default_value = "decimal")]
        units: UnitsArg,
        /// Where to write winner counts (stderr when absent).
        #[arg(long)]
        winners: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("mindiv: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mindiv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
