use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use mindiv_core::backtest::{
    ingest_csv, label_regimes, make_buckets, run_backtest, winner_counts, write_results_csv, Criterion, Regime,
    WinnerCount,
};
use mindiv_core::cem::cem_optimize;
use mindiv_core::embeddings::{mean_embedding_quadrature, DEFAULT_TOLERANCE};
use mindiv_core::experiments::{run_experiment, ExperimentName};
use mindiv_core::{EmbeddingPair, PortfolioObjective, TargetSpec};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Cli, CliError, Command};

fn create(path: &Path) -> Result<Box<dyn Write>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(Box::new(BufWriter::new(file)))
}

/// The file behind `--out`, or stdout.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => create(p),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json<T: Serialize>(value: &T, mut out: Box<dyn Write>, name: &str) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(name, e))
}

/// One number per line, taken from the first comma-separated field. A first
/// line that does not parse is a header.
fn read_sample(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut xs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => xs.push(v),
            _ if i == 0 => continue,
            _ => return Err(CliError::Usage(format!("{}: line {}: {field:?} is not a number", path.display(), i + 1))),
        }
    }
    Ok(xs)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let seed = cfg.seed(cli.seed);
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Estimate { xs, ys, kind } => {
            let divergence = cfg.divergence(*kind)?;
            let xs = read_sample(xs)?;
            let ys = ys.as_deref().map(read_sample).transpose()?;
            let estimate = divergence.estimate(&xs, ys.as_deref(), seed)?;
            write_json(&estimate, output(out)?, "estimate")
        }
        Command::EmbedEval { from, to, points, oracle } => {
            let (kernel, target) = cfg.kernel_and_target()?;
            let pair = EmbeddingPair::new(target, kernel)?;
            let (lo, hi) = default_range(&target);
            let (lo, hi) = (from.unwrap_or(lo), to.unwrap_or(hi));
            if *points < 2 || !(hi > lo) {
                return Err(CliError::Usage("the grid needs --points ≥ 2 and --from < --to".into()));
            }
            let mut w = output(out)?;
            let header = if *oracle { "x,mu,quadrature,abs_diff" } else { "x,mu" };
            let io_err = |e| CliError::io("embed-eval", e);
            writeln!(w, "{header}").map_err(io_err)?;
            for i in 0..*points {
                let x = lo + (hi - lo) * i as f64 / (*points - 1) as f64;
                let mu = pair.mean_embedding(x)?;
                if *oracle {
                    let q = mean_embedding_quadrature(&target, &kernel, x, DEFAULT_TOLERANCE * 1e-2)?;
                    writeln!(w, "{x},{mu},{q},{}", (mu - q).abs()).map_err(io_err)?;
                } else {
                    writeln!(w, "{x},{mu}").map_err(io_err)?;
                }
            }
            w.flush().map_err(io_err)
        }
        Command::Experiment { name, reps, sizes, keep_target_term } => {
            let name: ExperimentName = name.parse()?;
            let mut exp = cfg.experiment.clone().unwrap_or_default();
            exp.seed = cli.seed.or(cfg.seed).unwrap_or(exp.seed);
            if reps.is_some() {
                exp.repetitions = *reps;
            }
            if sizes.is_some() {
                exp.sample_sizes = sizes.clone();
            }
            exp.keep_target_term |= *keep_target_term;
            let result = run_experiment(name, &exp)?;
            result.write_csv(output(out)?)?;
            Ok(())
        }
        Command::Optimize { returns, units, bandwidth, trace } => {
            let panel = ingest_csv(returns, (*units).into())?;
            let divergence = cfg.divergence(None)?;
            let bandwidth = bandwidth.map(Into::into).unwrap_or(cfg.optimize.clone().unwrap_or_default().bandwidth);
            let objective = PortfolioObjective::new(panel.values.clone(), divergence, bandwidth, seed)?;
            let outcome = cem_optimize(|w| objective.score(w), panel.dimension(), &cfg.cem(seed))?;
            if let Some(path) = trace {
                outcome.trace.write_csv(create(path)?)?;
            }
            let report = OptimizeReport {
                assets: panel.assets.clone(),
                divergence: objective.value(&outcome.weights)?,
                weights: outcome.weights.as_slice().to_vec(),
                best_weights: outcome.best_weights.as_slice().to_vec(),
                best_score: outcome.best_value,
                iterations: outcome.trace.len(),
                degenerate: outcome.degenerate,
            };
            write_json(&report, output(out)?, "optimize")
        }
        Command::Backtest { returns, units, winners } => {
            let panel = ingest_csv(returns, (*units).into())?;
            let mut bt = cfg.backtest.clone().unwrap_or_default();
            if let Some(cem) = &cfg.cem {
                bt.cem = cem.clone();
            }
            bt.cem.seed = cli.seed.or(cfg.seed).unwrap_or(bt.cem.seed);
            let results = run_backtest(&panel, &bt)?;
            write_results_csv(&results, output(out)?)?;
            let buckets = make_buckets(panel.len(), bt.estimation_window, bt.evaluation_window)?;
            let regimes = label_regimes(&panel, &buckets, bt.regime_multiplier);
            let table = |criterion| WinnerTable {
                all: winner_counts(&results, criterion, None),
                low_vol: winner_counts(&results, criterion, Some(Regime::LowVol)),
                high_vol: winner_counts(&results, criterion, Some(Regime::HighVol)),
            };
            let report = WinnerReport {
                buckets: buckets.len(),
                high_vol_buckets: regimes.iter().filter(|r| **r == Regime::HighVol).count(),
                min_kurtosis: table(Criterion::MinKurtosis),
                max_skewness: table(Criterion::MaxSkewness),
            };
            let sink: Box<dyn Write> = match winners {
                Some(path) => create(path)?,
                None => Box::new(io::stderr().lock()),
            };
            write_json(&report, sink, "winners")
        }
    }
}

/// ±5 standard deviations around the mean, or [−1, 2] for unit-interval
/// targets.
fn default_range(target: &TargetSpec) -> (f64, f64) {
    match target.support() {
        (lo, hi) if lo.is_finite() && hi.is_finite() => (lo - (hi - lo), hi + (hi - lo)),
        _ => {
            let mom = target.moments();
            let sd = mom.variance.sqrt();
            (mom.mean - 5.0 * sd, mom.mean + 5.0 * sd)
        }
    }
}

#[derive(Serialize)]
struct OptimizeReport {
    assets: Vec<String>,
    weights: Vec<f64>,
    /// D at `weights`.
    divergence: f64,
    best_weights: Vec<f64>,
    best_score: f64,
    iterations: usize,
    degenerate: bool,
}

#[derive(Serialize)]
struct WinnerTable {
    all: Vec<WinnerCount>,
    low_vol: Vec<WinnerCount>,
    high_vol: Vec<WinnerCount>,
}

#[derive(Serialize)]
struct WinnerReport {
    buckets: usize,
    high_vol_buckets: usize,
    min_kurtosis: WinnerTable,
    max_skewness: WinnerTable,
}
