//! Synthetic two-asset experiments: objective curves over the weight grid,
//! the misspecification sign study, and convergence-rate checks.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem::Weights;
use crate::divergences::{self, mean_sd, Variant};
use crate::embeddings::{gaussian_gaussian_embedding, mmd2_gaussian_exponential, EmbeddingPair};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::objective::mmd2_two_sample_without_target_term;
use crate::rng::cell_rng;
use crate::targets::{beta_from_moments, TargetSpec};

/// Independent two-asset returns with the given means and variances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoAssetSetup {
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub optimal_w1: f64,
}

/// m_R = (0.02, 0.04), Σ_R = diag(0.01, 0.03), w* = (0.2, 0.8).
pub const WELL_SPECIFIED: TwoAssetSetup = TwoAssetSetup {
    means: [0.02, 0.04],
    variances: [0.01, 0.03],
    optimal_w1: 0.2,
};

impl TwoAssetSetup {
    /// Mean and variance of wᵀR for w = (w₁, 1 − w₁).
    pub fn portfolio_moments(&self, w1: f64) -> (f64, f64) {
        let w2 = 1.0 - w1;
        (
            w1 * self.means[0] + w2 * self.means[1],
            w1 * w1 * self.variances[0] + w2 * w2 * self.variances[1],
        )
    }

    pub fn gaussian_target(&self) -> TargetSpec {
        let (m, v) = self.portfolio_moments(self.optimal_w1);
        TargetSpec::Gaussian { m, sigma: v.sqrt() }
    }

    pub fn gaussian_returns<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        let a = Normal::new(self.means[0], self.variances[0].sqrt()).expect("positive variance");
        let b = Normal::new(self.means[1], self.variances[1].sqrt()).expect("positive variance");
        (0..n).map(|_| vec![a.sample(rng), b.sample(rng)]).collect()
    }

    /// Components drawn from moment-matched beta laws.
    pub fn beta_returns<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<Vec<f64>>> {
        let a = beta_from_moments(self.means[0], self.variances[0])?;
        let b = beta_from_moments(self.means[1], self.variances[1])?;
        let xa = a.sample_with(rng, n);
        let xb = b.sample_with(rng, n);
        Ok(xa.into_iter().zip(xb).map(|(x, y)| vec![x, y]).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    /// Gaussian returns, Gaussian kernel: two-sample MMD, semi-explicit MMD, KSD.
    Fig1,
    /// Gaussian returns, exponential kernel.
    Fig2,
    /// Beta returns, Laplacian kernel, target-only terms dropped.
    Fig4,
    /// Sign of the optimal-weight shift with one heavy-tailed component.
    Misspec,
    /// RMSE of the semi-explicit MMD against sample size.
    Rate,
}

impl FromStr for ExperimentName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Self::Fig1),
            "fig2" => Ok(Self::Fig2),
            "fig4" => Ok(Self::Fig4),
            "misspec" => Ok(Self::Misspec),
            "rate" => Ok(Self::Rate),
            other => Err(Error::UnknownExperiment(other.to_string())),
        }
    }
}

fn default_grid() -> Vec<f64> {
    (0..7).map(|i| 0.10 + 0.05 * i as f64).collect()
}

/// Overrides for the experiment defaults; absent fields keep the published
/// setup.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub sample_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Perturbation ε of the misspecification study.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Keep the target-only term in fig4, whose value moves with the adaptive
    /// bandwidth.
    #[serde(default)]
    pub keep_target_term: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    MmdTwoSampleU,
    MmdSemiExplicitU,
    KsdU,
}

/// One objective value of one repetition at one grid weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub n: usize,
    pub w1: f64,
    pub rep: usize,
    pub estimator: Estimator,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisspecRow {
    pub x: f64,
    pub rep: usize,
    pub m1: f64,
    pub m2: f64,
    pub var1: f64,
    pub var2: f64,
    pub delta_m: f64,
    pub delta_var: f64,
    pub d_minus: f64,
    pub d_zero: f64,
    pub d_plus: f64,
    /// sign(Δx/Δγ) with Δγ = −1.
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub kernel: String,
    pub n: usize,
    pub rmse: f64,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentOutput {
    Objectives(Vec<ObjectiveRow>),
    Misspec(Vec<MisspecRow>),
    Rate(Vec<RateRow>),
}

impl ExperimentOutput {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            ExperimentOutput::Objectives(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            ExperimentOutput::Misspec(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            ExperimentOutput::Rate(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
        }
        w.flush().map_err(|e| Error::io("experiment", e))?;
        Ok(())
    }
}

pub fn run_experiment(name: ExperimentName, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let grid = cfg.grid.clone().unwrap_or_else(default_grid);
    match name {
        ExperimentName::Fig1 => fig1(
            &cfg.sample_sizes.clone().unwrap_or_else(|| vec![100, 5000]),
            &grid,
            cfg.repetitions.unwrap_or(15),
            cfg.seed,
        )
        .map(ExperimentOutput::Objectives),
        ExperimentName::Fig2 => fig2(
            cfg.sample_sizes.as_ref().and_then(|s| s.first().copied()).unwrap_or(10_000),
            &grid,
            cfg.repetitions.unwrap_or(50),
            cfg.seed,
        )
        .map(ExperimentOutput::Objectives),
        ExperimentName::Fig4 => fig4(
            cfg.sample_sizes.as_ref().and_then(|s| s.first().copied()).unwrap_or(10_000),
            &grid,
            cfg.repetitions.unwrap_or(15),
            cfg.seed,
            cfg.keep_target_term,
        )
        .map(ExperimentOutput::Objectives),
        ExperimentName::Misspec => misspec(
            cfg.sample_sizes.as_ref().and_then(|s| s.first().copied()).unwrap_or(10_000),
            cfg.repetitions.unwrap_or(100),
            cfg.epsilon.unwrap_or(0.1),
            cfg.seed,
        )
        .map(ExperimentOutput::Misspec),
        ExperimentName::Rate => {
            let sizes = cfg.sample_sizes.clone().unwrap_or_else(|| vec![100, 400, 1600, 6400]);
            let reps = cfg.repetitions.unwrap_or(200);
            let mut rows = rate_check(&RateSetup::gaussian_kernel(), &sizes, reps, cfg.seed)?;
            rows.extend(rate_check(&RateSetup::exponential_kernel(), &sizes, reps, cfg.seed)?);
            Ok(ExperimentOutput::Rate(rows))
        }
    }
}

/// Evaluates `eval` on every (repetition, weight) cell. Each repetition draws
/// one return sample and one target sample shared by all grid weights.
fn grid_study<S, E>(n: usize, grid: &[f64], reps: usize, seed: u64, tag: u64, sample: S, eval: E) -> Result<Vec<ObjectiveRow>>
where
    S: Fn(&mut ChaCha20Rng) -> Result<(Vec<Vec<f64>>, Vec<f64>)> + Sync,
    E: Fn(&[f64], &[f64]) -> Result<Vec<(Estimator, f64)>> + Sync,
{
    let per_rep: Vec<Vec<ObjectiveRow>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cell_rng(seed, &[tag, n as u64, rep as u64]);
            let (returns, target_draws) = sample(&mut rng)?;
            let mut rows = Vec::new();
            for &w1 in grid {
                let xs = Weights::from_free(&[w1]).apply(&returns);
                for (estimator, value) in eval(&xs, &target_draws)? {
                    rows.push(ObjectiveRow { n, w1, rep, estimator, value });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ObjectiveRow> = per_rep.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.n, a.estimator)
            .cmp(&(b.n, b.estimator))
            .then(a.w1.total_cmp(&b.w1))
            .then(a.rep.cmp(&b.rep))
    });
    Ok(rows)
}

/// Gaussian returns and Gaussian kernel with c = σ̂ per candidate.
pub fn fig1(sizes: &[usize], grid: &[f64], reps: usize, seed: u64) -> Result<Vec<ObjectiveRow>> {
    let setup = WELL_SPECIFIED;
    let target = setup.gaussian_target();
    let mut out = Vec::new();
    for &n in sizes {
        out.extend(grid_study(
            n,
            grid,
            reps,
            seed,
            1,
            |rng| Ok((setup.gaussian_returns(rng, n), target.sample_with(rng, n))),
            |xs, ts| {
                let kernel = KernelSpec::Gaussian { c: mean_sd(xs).1 };
                let pair = EmbeddingPair::new(target, kernel)?;
                Ok(vec![
                    (Estimator::MmdTwoSampleU, divergences::mmd2_two_sample(&kernel, xs, ts, Variant::U)?),
                    (Estimator::MmdSemiExplicitU, divergences::mmd2_semi_explicit(&pair, xs, Variant::U, true)?),
                    (Estimator::KsdU, divergences::ksd2(&kernel, &target, xs, Variant::U)?),
                ])
            },
        )?);
    }
    Ok(out)
}

/// Gaussian returns and exponential kernel with b = 1/(2σ̂²) per candidate.
pub fn fig2(n: usize, grid: &[f64], reps: usize, seed: u64) -> Result<Vec<ObjectiveRow>> {
    let setup = WELL_SPECIFIED;
    let target = setup.gaussian_target();
    grid_study(
        n,
        grid,
        reps,
        seed,
        2,
        |rng| Ok((setup.gaussian_returns(rng, n), target.sample_with(rng, n))),
        |xs, ts| {
            let sd = mean_sd(xs).1;
            let kernel = KernelSpec::Exponential { b: 1.0 / (2.0 * sd * sd) };
            let pair = EmbeddingPair::new(target, kernel)?;
            Ok(vec![
                (Estimator::MmdTwoSampleU, divergences::mmd2_two_sample(&kernel, xs, ts, Variant::U)?),
                (Estimator::MmdSemiExplicitU, divergences::mmd2_semi_explicit(&pair, xs, Variant::U, true)?),
            ])
        },
    )
}

/// Beta returns, moment-matched beta target, Laplacian kernel with
/// λ = 1/(2σ̂) per candidate. Unless `keep_target_term` is set both
/// estimators omit their target-only term.
pub fn fig4(n: usize, grid: &[f64], reps: usize, seed: u64, keep_target_term: bool) -> Result<Vec<ObjectiveRow>> {
    let setup = WELL_SPECIFIED;
    let (m, v) = setup.portfolio_moments(setup.optimal_w1);
    let target = beta_from_moments(m, v)?;
    grid_study(
        n,
        grid,
        reps,
        seed,
        4,
        |rng| Ok((setup.beta_returns(rng, n)?, target.sample_with(rng, n))),
        |xs, ts| {
            let kernel = KernelSpec::Laplacian { lambda: 1.0 / (2.0 * mean_sd(xs).1) };
            let pair = EmbeddingPair::new(target, kernel)?;
            let two_sample = if keep_target_term {
                divergences::mmd2_two_sample(&kernel, xs, ts, Variant::U)?
            } else {
                mmd2_two_sample_without_target_term(&kernel, xs, ts, Variant::U)?
            };
            Ok(vec![
                (Estimator::MmdTwoSampleU, two_sample),
                (Estimator::MmdSemiExplicitU, divergences::mmd2_semi_explicit(&pair, xs, Variant::U, keep_target_term)?),
            ])
        },
    )
}

/// Median objective per (n, estimator, w₁).
pub fn medians(rows: &[ObjectiveRow]) -> BTreeMap<(usize, Estimator), Vec<(f64, f64)>> {
    summarize(rows, |v| quantile(v, 0.5))
}

/// Interquartile range per (n, estimator, w₁).
pub fn interquartile_ranges(rows: &[ObjectiveRow]) -> BTreeMap<(usize, Estimator), Vec<(f64, f64)>> {
    summarize(rows, |v| quantile(v, 0.75) - quantile(v, 0.25))
}

fn summarize(rows: &[ObjectiveRow], stat: impl Fn(&mut [f64]) -> f64) -> BTreeMap<(usize, Estimator), Vec<(f64, f64)>> {
    let mut cells: BTreeMap<(usize, Estimator), Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    for r in rows {
        let series = cells.entry((r.n, r.estimator)).or_default();
        match series.iter_mut().find(|(w, _)| *w == r.w1) {
            Some((_, v)) => v.push(r.value),
            None => series.push((r.w1, vec![r.value])),
        }
    }
    cells
        .into_iter()
        .map(|(k, series)| {
            let mut out: Vec<(f64, f64)> = series.into_iter().map(|(w, mut v)| (w, stat(&mut v))).collect();
            out.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, out)
        })
        .collect()
}

/// Linear-interpolation sample quantile (type 7).
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Semi-explicit MMD (U, Gaussian kernel c = σ̂) of the 2-asset portfolio
/// with a Laplace first component against the Gaussian target of w₀ = (x, 1−x),
/// at x − ε, x, x + ε.
pub fn misspec(n: usize, reps: usize, epsilon: f64, seed: u64) -> Result<Vec<MisspecRow>> {
    let xs_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let cells: Vec<(usize, f64)> = (0..reps).flat_map(|r| xs_grid.iter().map(move |&x| (r, x))).collect();
    cells
        .into_par_iter()
        .map(|(rep, x)| {
            let mut rng = cell_rng(seed, &[5, rep as u64]);
            let m1: f64 = rng.random_range(0.01..0.05);
            let m2: f64 = rng.random_range(0.01..0.05);
            let var1: f64 = rng.random_range(0.01..0.06);
            let var2: f64 = rng.random_range(0.01..0.06);
            let mut rng = cell_rng(seed, &[5, rep as u64, (x * 10.0).round() as u64]);
            // γ = 1 generalized normal has variance 2β²
            let laplace = TargetSpec::GeneralizedNormal { alpha: m1, beta: (var1 / 2.0).sqrt(), gamma: 1.0 };
            let r1 = laplace.sample_with(&mut rng, n);
            let normal = Normal::new(m2, var2.sqrt()).expect("positive variance");
            let returns: Vec<Vec<f64>> = r1.into_iter().map(|a| vec![a, normal.sample(&mut rng)]).collect();
            let target = TargetSpec::Gaussian {
                m: x * m1 + (1.0 - x) * m2,
                sigma: (x * x * var1 + (1.0 - x) * (1.0 - x) * var2).sqrt(),
            };
            let d = |w1: f64| -> Result<f64> {
                let p = Weights::from_free(&[w1]).apply(&returns);
                let pair = EmbeddingPair::new(target, KernelSpec::Gaussian { c: mean_sd(&p).1 })?;
                divergences::mmd2_semi_explicit(&pair, &p, Variant::U, true)
            };
            let (d_minus, d_zero, d_plus) = (d(x - epsilon)?, d(x)?, d(x + epsilon)?);
            let x_min = if d_minus < d_zero && d_minus <= d_plus {
                x - epsilon
            } else if d_plus < d_zero && d_plus < d_minus {
                x + epsilon
            } else {
                x
            };
            let dx = x_min - x;
            // Δγ = −1 flips the sign of Δx
            let sign = if dx > 0.0 { -1 } else if dx < 0.0 { 1 } else { 0 };
            Ok(MisspecRow {
                x,
                rep,
                m1,
                m2,
                var1,
                var2,
                delta_m: m2 - m1,
                delta_var: var2 - var1,
                d_minus,
                d_zero,
                d_plus,
                sign,
            })
        })
        .collect()
}

/// Sample law N(m₀, σ²) against target N(m₁, σ²) under a fixed kernel with a
/// known population MMD².
#[derive(Clone, Debug, PartialEq)]
pub struct RateSetup {
    pub label: String,
    pub kernel: KernelSpec,
    pub sample_mean: f64,
    pub target_mean: f64,
    pub sigma: f64,
}

impl RateSetup {
    pub fn gaussian_kernel() -> Self {
        Self { label: "gaussian".into(), kernel: KernelSpec::Gaussian { c: 1.0 }, sample_mean: 0.5, target_mean: 0.0, sigma: 1.0 }
    }

    /// bσ² = 0.3 < 1/2.
    pub fn exponential_kernel() -> Self {
        Self {
            label: "exponential".into(),
            kernel: KernelSpec::Exponential { b: 0.3 },
            sample_mean: 0.5,
            target_mean: 0.0,
            sigma: 1.0,
        }
    }

    pub fn target(&self) -> TargetSpec {
        TargetSpec::Gaussian { m: self.target_mean, sigma: self.sigma }
    }

    /// ‖μ_P − μ_Q‖² in closed form.
    pub fn population_mmd2(&self) -> Result<f64> {
        match self.kernel {
            KernelSpec::Gaussian { c } => {
                let s2 = c * c + 2.0 * self.sigma * self.sigma;
                let d = self.sample_mean - self.target_mean;
                Ok(2.0 * c / s2.sqrt() * (1.0 - (-d * d / (2.0 * s2)).exp()))
            }
            KernelSpec::Exponential { b } => mmd2_gaussian_exponential(self.sample_mean, self.target_mean, self.sigma, b),
            _ => Err(Error::UnsupportedPair { target: "gaussian".into(), kernel: self.kernel.name().into() }),
        }
    }

    /// μ_P(x) for the sampling law, used for the Monte-Carlo standard error.
    pub fn sample_embedding(&self, x: f64) -> Result<f64> {
        match self.kernel {
            KernelSpec::Gaussian { c } => Ok(gaussian_gaussian_embedding(self.sample_mean, self.sigma, c, x)),
            _ => EmbeddingPair::new(TargetSpec::Gaussian { m: self.sample_mean, sigma: self.sigma }, self.kernel)?
                .mean_embedding(x),
        }
    }
}

/// RMSE of the semi-explicit U-statistic around the population MMD² for each
/// sample size, with the least-squares slope of log RMSE on log N repeated on
/// every row.
pub fn rate_check(setup: &RateSetup, sizes: &[usize], reps: usize, seed: u64) -> Result<Vec<RateRow>> {
    let truth = setup.population_mmd2()?;
    let pair = EmbeddingPair::new(setup.target(), setup.kernel)?;
    let law = Normal::new(setup.sample_mean, setup.sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rmse = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let errors: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = cell_rng(seed, &[6, n as u64, rep as u64]);
                let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
                let v = divergences::mmd2_semi_explicit(&pair, &xs, Variant::U, true)?;
                Ok((v - truth) * (v - truth))
            })
            .collect::<Result<_>>()?;
        rmse.push((errors.iter().sum::<f64>() / reps as f64).sqrt());
    }
    let slope = log_log_slope(sizes, &rmse);
    Ok(sizes
        .iter()
        .zip(rmse)
        .map(|(&n, rmse)| RateRow { kernel: setup.label.clone(), n, rmse, slope })
        .collect())
}

/// Least-squares slope of ln y on ln n.
pub fn log_log_slope(ns: &[usize], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
