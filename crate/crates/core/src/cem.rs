//! Cross-entropy method over portfolio weights.
//!
//! The optimizer maximizes L(w) = −D(w) for a divergence estimate D. Free
//! coordinates v ∈ ℝ^{d−1} are drawn from a Gaussian and completed to
//! w = [v; 1 − 1ᵀv], so every candidate lies on the budget hyperplane. The
//! simplex variant draws w directly from a Dirichlet.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Portfolio weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::Domain("a portfolio needs at least two assets".into()));
        }
        let total: f64 = w.iter().sum();
        if !w.iter().all(|x| x.is_finite()) || (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(w))
    }

    /// Completes d − 1 free coordinates with 1 − Σv.
    pub fn from_free(v: &[f64]) -> Self {
        let mut w = v.to_vec();
        w.push(1.0 - v.iter().sum::<f64>());
        Self(w)
    }

    pub fn equal(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// wᵀr for each row r of `rows`.
    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter()
            .map(|r| r.iter().zip(&self.0).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl std::ops::Index<usize> for Weights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Gaussian on the free coordinates of the budget hyperplane.
    Gaussian,
    /// Dirichlet on the simplex (long-only portfolios).
    Dirichlet,
}

fn default_rho() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.7
}
fn default_samples() -> usize {
    200
}
fn default_iterations() -> usize {
    50
}
fn default_initial_sd() -> f64 {
    0.25
}
fn default_floor() -> f64 {
    1e-8
}
fn default_concentration() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CemConfig {
    /// Quantile parameter: the elite is the top ρ fraction.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Smoothing weight β of the new fit.
    #[serde(default = "default_beta")]
    pub beta_smooth: f64,
    /// Candidates per iteration S.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Iterations T.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Initial mean of the free coordinates; equal weights when absent.
    #[serde(default)]
    pub initial_mean: Option<Vec<f64>>,
    /// Initial covariance of the free coordinates; initial_sd²·I when absent.
    #[serde(default)]
    pub initial_covariance: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_initial_sd")]
    pub initial_sd: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_floor")]
    pub sigma_floor: f64,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    /// Initial symmetric Dirichlet concentration for the simplex sampler.
    #[serde(default = "default_concentration")]
    pub initial_concentration: f64,
}

fn default_sampler() -> Sampler {
    Sampler::Gaussian
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            beta_smooth: default_beta(),
            samples: default_samples(),
            iterations: default_iterations(),
            initial_mean: None,
            initial_covariance: None,
            initial_sd: default_initial_sd(),
            seed: 0,
            sigma_floor: default_floor(),
            sampler: default_sampler(),
            initial_concentration: default_concentration(),
        }
    }
}

impl CemConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if d < 2 {
            return Err(Error::Domain("CEM needs d ≥ 2 assets".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter { name: "rho", value: self.rho, reason: "must lie in (0, 1)" });
        }
        if !(self.beta_smooth > 0.0 && self.beta_smooth <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "beta_smooth",
                value: self.beta_smooth,
                reason: "must lie in (0, 1]",
            });
        }
        if self.samples < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: self.samples });
        }
        if !(self.sigma_floor >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_floor",
                value: self.sigma_floor,
                reason: "must be nonnegative",
            });
        }
        crate::error::positive("initial_sd", self.initial_sd)?;
        crate::error::positive("initial_concentration", self.initial_concentration)?;
        if let Some(m) = &self.initial_mean {
            if m.len() != d - 1 {
                return Err(Error::Domain(format!("initial_mean needs {} entries", d - 1)));
            }
        }
        if let Some(c) = &self.initial_covariance {
            let cov = square(c, d - 1)?;
            if (&cov - cov.transpose()).amax() > 1e-12 {
                return Err(Error::Domain("initial_covariance is not symmetric".into()));
            }
            if cov.symmetric_eigenvalues().iter().any(|&e| e < -1e-12) {
                return Err(Error::Domain("initial_covariance is not positive semidefinite".into()));
            }
        }
        Ok(())
    }

    /// Index k = ⌈(1−ρ)S⌉ of the order statistic L_(k) used as threshold.
    pub fn quantile_index(&self) -> usize {
        (((1.0 - self.rho) * self.samples as f64).ceil() as usize).clamp(1, self.samples)
    }
}

fn square(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Domain(format!("initial_covariance must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// One iteration of the optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemIteration {
    pub iteration: usize,
    pub gamma: f64,
    pub elite_count: usize,
    /// Mean of the sampling distribution after smoothing, as full weights.
    pub mean: Vec<f64>,
    /// Diagonal of the smoothed covariance (Gaussian) or the Dirichlet
    /// concentrations (simplex sampler).
    pub spread: Vec<f64>,
    /// Largest L seen over all iterations so far.
    pub best_so_far: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CemTrace(pub Vec<CemIteration>);

impl CemTrace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CemIteration> {
        self.0.iter()
    }

    /// Rows of (iteration, gamma, elite_count, best, mean_1..mean_d, spread_1..).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if let Some(first) = self.0.first() {
            let mut header = vec!["iteration".to_string(), "gamma".into(), "elite_count".into(), "best_so_far".into()];
            header.extend((1..=first.mean.len()).map(|i| format!("mean_{i}")));
            header.extend((1..=first.spread.len()).map(|i| format!("spread_{i}")));
            w.write_record(&header)?;
        }
        for it in &self.0 {
            let mut row = vec![
                it.iteration.to_string(),
                it.gamma.to_string(),
                it.elite_count.to_string(),
                it.best_so_far.to_string(),
            ];
            row.extend(it.mean.iter().map(f64::to_string));
            row.extend(it.spread.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemOutcome {
    /// Completed mean of the final sampling distribution.
    pub weights: Weights,
    /// Best candidate sampled over the run and its L value.
    pub best_weights: Weights,
    pub best_value: f64,
    pub trace: CemTrace,
    /// Set when the elite stopped changing and the covariance collapsed.
    pub degenerate: bool,
}

/// Consecutive identical-elite iterations that, with a collapsed covariance,
/// stop the run.
const STALL_LIMIT: usize = 5;

/// Maximizes `objective` over weights of dimension `d`. Objective errors that
/// are numeric (overflow, out-of-support) score the candidate as −∞; other
/// errors abort the run.
pub fn cem_optimize<F>(objective: F, d: usize, cfg: &CemConfig) -> Result<CemOutcome>
where
    F: Fn(&Weights) -> Result<f64> + Sync,
{
    cfg.validate(d)?;
    match cfg.sampler {
        Sampler::Gaussian => gaussian_cem(&objective, d, cfg),
        Sampler::Dirichlet => dirichlet_cem(&objective, d, cfg),
    }
}

fn score_all<F>(objective: &F, candidates: &[Weights]) -> Result<Vec<f64>>
where
    F: Fn(&Weights) -> Result<f64> + Sync,
{
    candidates
        .par_iter()
        .map(|w| match objective(w) {
            Ok(v) if v.is_nan() => Ok(f64::NEG_INFINITY),
            Ok(v) => Ok(v),
            Err(e) if e.is_numeric() => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        })
        .collect()
}

fn iteration_rng(seed: u64, t: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Threshold γ = L_(k) (ascending order statistic) and the elite indices L ≥ γ.
fn elite(values: &[f64], k: usize) -> (f64, Vec<usize>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gamma = sorted[k - 1];
    let idx = (0..values.len()).filter(|&i| values[i] >= gamma).collect();
    (gamma, idx)
}

struct Best {
    value: f64,
    weights: Option<Weights>,
}

impl Best {
    fn update(&mut self, values: &[f64], candidates: &[Weights]) {
        for (v, w) in values.iter().zip(candidates) {
            if *v > self.value || self.weights.is_none() {
                self.value = *v;
                self.weights = Some(w.clone());
            }
        }
    }
}

struct Stall {
    runs: usize,
}

impl Stall {
    /// Counts consecutive iterations whose elite values are all identical.
    fn observe(&mut self, elite_values: &[f64]) -> usize {
        let flat = elite_values.windows(2).all(|p| p[0] == p[1]);
        self.runs = if flat { self.runs + 1 } else { 0 };
        self.runs
    }
}

fn gaussian_cem<F>(objective: &F, d: usize, cfg: &CemConfig) -> Result<CemOutcome>
where
    F: Fn(&Weights) -> Result<f64> + Sync,
{
    let n = d - 1;
    let mut mean = match &cfg.initial_mean {
        Some(m) => DVector::from_column_slice(m),
        None => DVector::from_element(n, 1.0 / d as f64),
    };
    let mut cov = match &cfg.initial_covariance {
        Some(c) => square(c, n)?,
        None => DMatrix::identity(n, n) * (cfg.initial_sd * cfg.initial_sd),
    };
    let k = cfg.quantile_index();
    let mut best = Best { value: f64::NEG_INFINITY, weights: None };
    let mut stall = Stall { runs: 0 };
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut degenerate = false;

    for t in 0..cfg.iterations {
        let factor = cholesky_factor(&cov, cfg.sigma_floor)?;
        let mut rng = iteration_rng(cfg.seed, t);
        let free: Vec<DVector<f64>> = (0..cfg.samples)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                &mean + &factor * z
            })
            .collect();
        let candidates: Vec<Weights> = free.iter().map(|v| Weights::from_free(v.as_slice())).collect();
        let values = score_all(objective, &candidates)?;
        best.update(&values, &candidates);

        let (gamma, idx) = elite(&values, k);
        let m = idx.len() as f64;
        let elite_mean = idx.iter().fold(DVector::zeros(n), |acc, &i| acc + &free[i]) / m;
        let mut elite_cov = idx.iter().fold(DMatrix::zeros(n, n), |acc, &i| {
            let dv = &free[i] - &elite_mean;
            acc + &dv * dv.transpose()
        }) / m;
        let collapsed = elite_cov.diagonal().iter().all(|&v| v <= cfg.sigma_floor);
        for i in 0..n {
            elite_cov[(i, i)] += cfg.sigma_floor;
        }
        let b = cfg.beta_smooth;
        if b == 1.0 {
            mean = elite_mean;
            cov = elite_cov;
        } else {
            mean = &mean * (1.0 - b) + elite_mean * b;
            cov = &cov * (1.0 - b) + elite_cov * b;
        }
        trace.push(CemIteration {
            iteration: t,
            gamma,
            elite_count: idx.len(),
            mean: Weights::from_free(mean.as_slice()).into_vec(),
            spread: cov.diagonal().iter().copied().collect(),
            best_so_far: best.value,
        });
        let runs = stall.observe(&idx.iter().map(|&i| values[i]).collect::<Vec<_>>());
        if runs >= STALL_LIMIT && collapsed {
            degenerate = true;
            break;
        }
    }
    Ok(CemOutcome {
        weights: Weights::from_free(mean.as_slice()),
        best_weights: best.weights.unwrap_or_else(|| Weights::from_free(mean.as_slice())),
        best_value: best.value,
        trace: CemTrace(trace),
        degenerate,
    })
}

/// Lower Cholesky factor, adding diagonal jitter if rounding made the matrix
/// indefinite.
fn cholesky_factor(cov: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let mut jitter = floor.max(1e-14);
    let mut m = cov.clone();
    for _ in 0..20 {
        if let Some(c) = m.clone().cholesky() {
            return Ok(c.l());
        }
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        jitter *= 10.0;
    }
    Err(Error::Infeasible("CEM covariance is not positive definite".into()))
}

/// One Dirichlet(α) draw, by normalizing independent Gamma(αⱼ, 1) variates.
pub fn simplex_sampler_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Weights> {
    if alpha.len() < 2 {
        return Err(Error::Domain("a Dirichlet draw needs d ≥ 2".into()));
    }
    let mut g = Vec::with_capacity(alpha.len());
    for &a in alpha {
        crate::error::positive("concentration", a)?;
        let gamma = Gamma::new(a, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        g.push(gamma.sample(rng));
    }
    let total: f64 = g.iter().sum();
    if !(total > 0.0) {
        // every Gamma draw underflowed; fall back to the largest concentration
        let j = (0..alpha.len()).max_by(|&i, &j| alpha[i].total_cmp(&alpha[j])).unwrap_or(0);
        let mut w = vec![0.0; alpha.len()];
        w[j] = 1.0;
        return Ok(Weights(w));
    }
    let mut w: Vec<f64> = g.iter().map(|x| x / total).collect();
    let last = w.len() - 1;
    w[last] = 1.0 - w[..last].iter().sum::<f64>();
    Ok(Weights(w))
}

/// Dirichlet parameters matching the elite's component means and average
/// variance: α₀ = mean over j of m̄ⱼ(1−m̄ⱼ)/vⱼ − 1, α = α₀ m̄.
fn dirichlet_refit(elite: &[&Weights], floor: f64) -> Vec<f64> {
    let d = elite[0].len();
    let m = elite.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| elite.iter().map(|w| w[j]).sum::<f64>() / m).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..d {
        let var = elite.iter().map(|w| (w[j] - means[j]).powi(2)).sum::<f64>() / m + floor;
        let mj = means[j].clamp(1e-12, 1.0 - 1e-12);
        total += mj * (1.0 - mj) / var - 1.0;
        count += 1;
    }
    let alpha0 = (total / count as f64).max(1e-3);
    means.iter().map(|&mj| (alpha0 * mj).max(1e-6)).collect()
}

fn dirichlet_cem<F>(objective: &F, d: usize, cfg: &CemConfig) -> Result<CemOutcome>
where
    F: Fn(&Weights) -> Result<f64> + Sync,
{
    let mut alpha = vec![cfg.initial_concentration; d];
    let k = cfg.quantile_index();
    let mut best = Best { value: f64::NEG_INFINITY, weights: None };
    let mut stall = Stall { runs: 0 };
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut degenerate = false;
    let mean_of = |a: &[f64]| {
        let s: f64 = a.iter().sum();
        let mut w: Vec<f64> = a.iter().map(|x| x / s).collect();
        let last = w.len() - 1;
        w[last] = 1.0 - w[..last].iter().sum::<f64>();
        Weights(w)
    };

    for t in 0..cfg.iterations {
        let mut rng = iteration_rng(cfg.seed, t);
        let candidates: Vec<Weights> = (0..cfg.samples)
            .map(|_| simplex_sampler_dirichlet(&alpha, &mut rng))
            .collect::<Result<_>>()?;
        let values = score_all(objective, &candidates)?;
        best.update(&values, &candidates);
        let (gamma, idx) = elite(&values, k);
        let members: Vec<&Weights> = idx.iter().map(|&i| &candidates[i]).collect();
        let fitted = dirichlet_refit(&members, cfg.sigma_floor);
        let b = cfg.beta_smooth;
        for (a, f) in alpha.iter_mut().zip(&fitted) {
            *a = if b == 1.0 { *f } else { (1.0 - b) * *a + b * f };
        }
        let a0: f64 = alpha.iter().sum();
        // Dirichlet component variance m(1 − m)/(α₀ + 1) bounded by 1/(4(α₀+1))
        let collapsed = 0.25 / (a0 + 1.0) <= cfg.sigma_floor;
        trace.push(CemIteration {
            iteration: t,
            gamma,
            elite_count: idx.len(),
            mean: mean_of(&alpha).into_vec(),
            spread: alpha.clone(),
            best_so_far: best.value,
        });
        let runs = stall.observe(&idx.iter().map(|&i| values[i]).collect::<Vec<_>>());
        if runs >= STALL_LIMIT && collapsed {
            degenerate = true;
            break;
        }
    }
    let weights = mean_of(&alpha);
    Ok(CemOutcome {
        best_weights: best.weights.unwrap_or_else(|| weights.clone()),
        weights,
        best_value: best.value,
        trace: CemTrace(trace),
        degenerate,
    })
}
