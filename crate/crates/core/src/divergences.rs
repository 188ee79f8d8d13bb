//! Divergence estimators between a sample and a target distribution.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingPair, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::gram::{self, SeriesPlan};
use crate::kernels::KernelSpec;
use crate::special::digamma;
use crate::targets::TargetSpec;

/// Exponent beyond which e^{bxy} is treated as an overflow.
pub const EXPONENT_HORIZON: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    MmdTwoSampleU,
    MmdTwoSampleV,
    MmdSemiExplicitU,
    MmdSemiExplicitV,
    KsdV,
    KsdU,
    Fssd,
    Wasserstein,
    KlGaussian,
}

impl DivergenceKind {
    pub fn needs_kernel(&self) -> bool {
        !matches!(self, DivergenceKind::Wasserstein | DivergenceKind::KlGaussian)
    }

    pub fn is_two_sample(&self) -> bool {
        matches!(self, DivergenceKind::MmdTwoSampleU | DivergenceKind::MmdTwoSampleV)
    }

    pub fn is_semi_explicit(&self) -> bool {
        matches!(self, DivergenceKind::MmdSemiExplicitU | DivergenceKind::MmdSemiExplicitV)
    }

    pub fn is_stein(&self) -> bool {
        matches!(self, DivergenceKind::KsdU | DivergenceKind::KsdV | DivergenceKind::Fssd)
    }

    pub fn variant(&self) -> Variant {
        match self {
            DivergenceKind::MmdTwoSampleU | DivergenceKind::MmdSemiExplicitU | DivergenceKind::KsdU => {
                Variant::U
            }
            _ => Variant::V,
        }
    }
}

/// U-statistics drop the diagonal of the double sum; V-statistics keep it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    U,
    V,
}

fn default_wad_p() -> f64 {
    1.0
}

fn default_target_sample_size() -> usize {
    1000
}

/// Which estimator to run, against which target, with which kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    pub kind: DivergenceKind,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    pub target: TargetSpec,
    #[serde(default = "default_wad_p")]
    pub wad_p: f64,
    /// Test locations; when empty, J = 5 draws from a Gaussian fitted to the
    /// evaluated sample.
    #[serde(default)]
    pub fssd_locations: Vec<f64>,
    /// Number of target draws M for the two-sample estimators.
    #[serde(default = "default_target_sample_size")]
    pub target_sample_size: usize,
    /// Omit E_{X,Y∼Q} k(X, Y) from the semi-explicit estimators.
    #[serde(default)]
    pub drop_constant_term: bool,
}

impl DivergenceConfig {
    pub fn new(kind: DivergenceKind, kernel: Option<KernelSpec>, target: TargetSpec) -> Self {
        Self {
            kind,
            kernel,
            target,
            wad_p: default_wad_p(),
            fssd_locations: Vec::new(),
            target_sample_size: default_target_sample_size(),
            drop_constant_term: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if self.kind.needs_kernel() {
            let kernel = self.kernel_or_err()?;
            kernel.validate()?;
            if self.kind.is_stein() && !kernel.has_derivatives() {
                return Err(Error::UnsupportedKernel(kernel.name().to_string()));
            }
            if self.kind.is_semi_explicit() {
                EmbeddingPair::new(self.target, kernel)?;
            }
        }
        match self.kind {
            DivergenceKind::Wasserstein if !(self.wad_p >= 1.0) => Err(Error::InvalidParameter {
                name: "wad_p",
                value: self.wad_p,
                reason: "must be at least 1",
            }),
            DivergenceKind::KlGaussian if !matches!(self.target, TargetSpec::Gaussian { .. }) => {
                Err(Error::Domain("the KL objective needs a Gaussian target".into()))
            }
            k if k.is_two_sample() && self.target_sample_size < 2 => Err(Error::InsufficientSamples {
                needed: 2,
                got: self.target_sample_size,
            }),
            _ => Ok(()),
        }
    }

    fn kernel_or_err(&self) -> Result<KernelSpec> {
        self.kernel
            .ok_or_else(|| Error::Domain(format!("{:?} needs a kernel", self.kind)))
    }

    /// Runs the configured estimator on `xs`. Two-sample kinds use `ys` when
    /// given, otherwise `target_sample_size` target draws generated from `seed`.
    pub fn estimate(&self, xs: &[f64], ys: Option<&[f64]>, seed: u64) -> Result<DivergenceEstimate> {
        self.validate()?;
        let mut m = None;
        let value = match self.kind {
            DivergenceKind::MmdTwoSampleU | DivergenceKind::MmdTwoSampleV => {
                let kernel = self.kernel_or_err()?;
                let owned;
                let ys = match ys {
                    Some(ys) => ys,
                    None => {
                        let mut rng = ChaCha20Rng::seed_from_u64(seed);
                        owned = self.target.sample_with(&mut rng, self.target_sample_size);
                        &owned
                    }
                };
                m = Some(ys.len());
                mmd2_two_sample(&kernel, xs, ys, self.kind.variant())?
            }
            DivergenceKind::MmdSemiExplicitU | DivergenceKind::MmdSemiExplicitV => {
                let pair = EmbeddingPair::new(self.target, self.kernel_or_err()?)?;
                mmd2_semi_explicit(&pair, xs, self.kind.variant(), !self.drop_constant_term)?
            }
            DivergenceKind::KsdU | DivergenceKind::KsdV => {
                ksd2(&self.kernel_or_err()?, &self.target, xs, self.kind.variant())?
            }
            DivergenceKind::Fssd => {
                let defaults;
                let locations = if self.fssd_locations.is_empty() {
                    defaults = default_fssd_locations(xs, DEFAULT_FSSD_LOCATIONS, seed)?;
                    &defaults
                } else {
                    &self.fssd_locations
                };
                fssd2(&self.kernel_or_err()?, &self.target, xs, locations)?
            }
            DivergenceKind::Wasserstein => wasserstein_p(xs, &self.target, self.wad_p)?,
            DivergenceKind::KlGaussian => kl_gaussian_objective(xs, &self.target)?,
        };
        Ok(DivergenceEstimate {
            kind: self.kind,
            value,
            n_samples: xs.len(),
            m,
            constant_term_included: !(self.kind.is_semi_explicit() && self.drop_constant_term),
            kernel: if self.kind.needs_kernel() { self.kernel } else { None },
            target: self.target,
        })
    }
}

/// One estimator value with the inputs that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub kind: DivergenceKind,
    pub value: f64,
    /// Sample size of the evaluated distribution.
    #[serde(rename = "n")]
    pub n_samples: usize,
    /// Number of target draws, for two-sample estimators.
    pub m: Option<usize>,
    pub constant_term_included: bool,
    pub kernel: Option<KernelSpec>,
    pub target: TargetSpec,
}

/// Sample mean and standard deviation (N − 1 denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// J draws from a Gaussian fitted to `xs`.
pub fn default_fssd_locations(xs: &[f64], j: usize, seed: u64) -> Result<Vec<f64>> {
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: xs.len() });
    }
    let (mean, sd) = mean_sd(xs);
    let normal = Normal::new(mean, sd.max(f64::MIN_POSITIVE)).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..j).map(|_| normal.sample(&mut rng)).collect())
}

pub const DEFAULT_FSSD_LOCATIONS: usize = 5;

fn need(xs: &[f64], needed: usize) -> Result<()> {
    if xs.len() < needed {
        Err(Error::InsufficientSamples { needed, got: xs.len() })
    } else {
        Ok(())
    }
}

/// Rejects exponential-type kernels whose exponent b·x·y could overflow.
pub fn check_exponent(kernel: &KernelSpec, xs: &[f64], ys: &[f64]) -> Result<()> {
    let b = match *kernel {
        KernelSpec::Exponential { b } => b,
        KernelSpec::GaussianExponentiated { b, .. } => b,
        _ => return Ok(()),
    };
    if b == 0.0 {
        return Ok(());
    }
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let reach = max_abs(xs).max(max_abs(ys));
    if b * reach * reach > EXPONENT_HORIZON {
        return Err(Error::DivergentParameter(format!(
            "b·x·y reaches {:.1}, beyond the overflow horizon {EXPONENT_HORIZON}",
            b * reach * reach
        )));
    }
    Ok(())
}

/// (1/N²) Σᵢⱼ k(xᵢ, xⱼ) for V, or the off-diagonal mean for U.
fn gram_mean(kernel: &KernelSpec, xs: &[f64], variant: Variant) -> f64 {
    let n = xs.len() as f64;
    let off = gram::offdiag_sum(kernel, xs);
    match variant {
        Variant::U => off / (n * (n - 1.0)),
        Variant::V => (off + gram::diag_sum(kernel, xs)) / (n * n),
    }
}

/// Squared MMD from samples of both distributions.
pub fn mmd2_two_sample(kernel: &KernelSpec, xs: &[f64], ys: &[f64], variant: Variant) -> Result<f64> {
    let needed = if variant == Variant::U { 2 } else { 1 };
    need(xs, needed)?;
    need(ys, needed)?;
    kernel.validate()?;
    check_exponent(kernel, xs, ys)?;
    let cross = gram::cross_sum(kernel, xs, ys) / (xs.len() as f64 * ys.len() as f64);
    Ok(gram_mean(kernel, xs, variant) + gram_mean(kernel, ys, variant) - 2.0 * cross)
}

/// Squared MMD with the target's mean embedding in closed form:
/// Gram term + E_{Q×Q} k − (2/N) Σ μ(xᵢ). The constant middle term is
/// skipped when `include_constant` is false.
pub fn mmd2_semi_explicit(
    pair: &EmbeddingPair,
    xs: &[f64],
    variant: Variant,
    include_constant: bool,
) -> Result<f64> {
    need(xs, if variant == Variant::U { 2 } else { 1 })?;
    check_exponent(&pair.kernel, xs, &[])?;
    let n = xs.len() as f64;
    let embed: f64 = pair.mean_embedding_many(xs)?.iter().sum::<f64>() / n;
    let constant = if include_constant {
        pair.double_expectation(DEFAULT_TOLERANCE)?
    } else {
        0.0
    };
    Ok(gram_mean(&pair.kernel, xs, variant) + constant - 2.0 * embed)
}

/// Stein kernel assembled from the score and the kernel derivatives:
/// s(x)s(y)k + s(y)∂ₓk + s(x)∂ᵧk + ∂ₓ∂ᵧk.
pub fn stein_kernel_generic(kernel: &KernelSpec, target: &TargetSpec, x: f64, y: f64) -> Result<f64> {
    let sx = target.score(x)?;
    let sy = target.score(y)?;
    stein_from_scores(kernel, x, y, sx, sy)
}

fn stein_from_scores(kernel: &KernelSpec, x: f64, y: f64, sx: f64, sy: f64) -> Result<f64> {
    let k = kernel.eval(x, y);
    let dx = kernel.dx(x, y)?;
    let dy = kernel.dx(y, x)?;
    let dxy = kernel.dxdy(x, y)?;
    Ok(sx * sy * k + sy * dx + sx * dy + dxy)
}

/// Stein kernel of a N(m, σ²) target under the Gaussian kernel of bandwidth c:
/// [(x−m)(y−m)/σ⁴ − (x−y)²(σ²+c²)/(σ²c⁴) + 1/c²] e^{−(x−y)²/(2c²)}.
pub fn stein_kernel_gaussian(m: f64, sigma: f64, c: f64, x: f64, y: f64) -> f64 {
    let s2 = sigma * sigma;
    let c2 = c * c;
    let d = x - y;
    let poly = (x - m) * (y - m) / (s2 * s2) - d * d * (s2 + c2) / (s2 * c2 * c2) + 1.0 / c2;
    poly * (-d * d / (2.0 * c2)).exp()
}

/// The Stein kernel h_q(x, y); the Gaussian-target, Gaussian-kernel pair uses
/// its closed form.
pub fn stein_kernel(kernel: &KernelSpec, target: &TargetSpec, x: f64, y: f64) -> Result<f64> {
    if let (KernelSpec::Gaussian { c }, TargetSpec::Gaussian { m, sigma }) = (kernel, target) {
        return Ok(stein_kernel_gaussian(*m, *sigma, *c, x, y));
    }
    stein_kernel_generic(kernel, target, x, y)
}

/// Squared kernel Stein discrepancy.
pub fn ksd2(kernel: &KernelSpec, target: &TargetSpec, xs: &[f64], variant: Variant) -> Result<f64> {
    need(xs, if variant == Variant::U { 2 } else { 1 })?;
    if !kernel.has_derivatives() {
        return Err(Error::UnsupportedKernel(kernel.name().to_string()));
    }
    let scores: Vec<f64> = xs.iter().map(|&x| target.score(x)).collect::<Result<_>>()?;
    let n = xs.len() as f64;
    let diag: f64 = xs
        .iter()
        .zip(&scores)
        .map(|(&x, &s)| stein_from_scores(kernel, x, x, s, s))
        .sum::<Result<f64>>()?;
    let off = match kernel {
        KernelSpec::Gaussian { c } if xs.len() > 64 => match SeriesPlan::new(kernel, xs, &[]) {
            Some(plan) => stein_gaussian_series(&plan.widened(8), *c, xs, &scores) - diag,
            None => stein_offdiag_direct(kernel, xs, &scores)?,
        },
        _ => stein_offdiag_direct(kernel, xs, &scores)?,
    };
    Ok(match variant {
        Variant::U => off / (n * (n - 1.0)),
        Variant::V => (off + diag) / (n * n),
    })
}

fn stein_offdiag_direct(kernel: &KernelSpec, xs: &[f64], scores: &[f64]) -> Result<f64> {
    let rows: Vec<f64> = (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in i + 1..xs.len() {
                acc += stein_from_scores(kernel, xs[i], xs[j], scores[i], scores[j])?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(2.0 * rows.iter().sum::<f64>())
}

/// Σᵢⱼ h(xᵢ, xⱼ) for the Gaussian kernel through the factorized series. With
/// u the shifted coordinates, h = k·[sₓs_y + (sₓ−s_y)(uₓ−u_y)/c² + 1/c² − (uₓ−u_y)²/c⁴]
/// splits into products of weighted moment sums.
fn stein_gaussian_series(plan: &SeriesPlan, c: f64, xs: &[f64], scores: &[f64]) -> f64 {
    let c2 = c * c;
    let u: Vec<f64> = xs.iter().map(|&x| plan.shifted(x)).collect();
    let su: Vec<f64> = scores.iter().zip(&u).map(|(s, u)| s * u).collect();
    let uu: Vec<f64> = u.iter().map(|u| u * u).collect();
    let m1 = plan.moments(xs, None);
    let ms = plan.moments(xs, Some(scores));
    let mu = plan.moments(xs, Some(&u));
    let msu = plan.moments(xs, Some(&su));
    let muu = plan.moments(xs, Some(&uu));
    (0..=plan.order())
        .map(|k| {
            ms[k] * ms[k] + 2.0 / c2 * (msu[k] * m1[k] - ms[k] * mu[k]) + m1[k] * m1[k] / c2
                - 2.0 / (c2 * c2) * (muu[k] * m1[k] - mu[k] * mu[k])
        })
        .sum()
}

/// Finite-set Stein discrepancy with test locations `locations`:
/// (2/(N(N−1))) Σ_{i<j} τ(xᵢ)·τ(xⱼ), τ(x) = [s(x)k(x,vⱼ) + ∂ₓk(x,vⱼ)]ⱼ/√J.
pub fn fssd2(kernel: &KernelSpec, target: &TargetSpec, xs: &[f64], locations: &[f64]) -> Result<f64> {
    if locations.is_empty() {
        return Err(Error::NoLocations);
    }
    need(xs, 2)?;
    let j = locations.len();
    let norm = 1.0 / (j as f64).sqrt();
    let mut total = vec![0.0; j];
    let mut self_dots = 0.0;
    for &x in xs {
        let s = target.score(x)?;
        let mut dot = 0.0;
        for (l, &v) in locations.iter().enumerate() {
            let tau = norm * (s * kernel.eval(x, v) + kernel.dx(x, v)?);
            total[l] += tau;
            dot += tau * tau;
        }
        self_dots += dot;
    }
    let n = xs.len() as f64;
    let full: f64 = total.iter().map(|t| t * t).sum();
    Ok((full - self_dots) / (n * (n - 1.0)))
}

/// The Stein witness vector τ(x) used by `fssd2`.
pub fn fssd_feature(kernel: &KernelSpec, target: &TargetSpec, x: f64, locations: &[f64]) -> Result<Vec<f64>> {
    let norm = 1.0 / (locations.len() as f64).sqrt();
    let s = target.score(x)?;
    locations
        .iter()
        .map(|&v| Ok(norm * (s * kernel.eval(x, v) + kernel.dx(x, v)?)))
        .collect()
}

/// Target quantiles at the midpoints (j − ½)/N, j = 1..N.
pub fn quantile_grid(target: &TargetSpec, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|j| target.inverse_cdf((j as f64 + 0.5) / n as f64))
        .collect()
}

/// Wasserstein-p distance between the empirical measure of `xs` and `target`,
/// pairing order statistics with midpoint quantiles.
pub fn wasserstein_p(xs: &[f64], target: &TargetSpec, p: f64) -> Result<f64> {
    need(xs, 1)?;
    let grid = quantile_grid(target, xs.len())?;
    wasserstein_to_grid(xs, &grid, p)
}

/// As `wasserstein_p`, against a precomputed `quantile_grid` of matching length.
pub fn wasserstein_to_grid(xs: &[f64], grid: &[f64], p: f64) -> Result<f64> {
    need(xs, 1)?;
    if grid.len() != xs.len() {
        return Err(Error::Domain(format!(
            "quantile grid has {} points for {} samples",
            grid.len(),
            xs.len()
        )));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().zip(grid).map(|(x, q)| power(x - q, p)).sum();
    Ok(root(total / xs.len() as f64, p))
}

fn power(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d.abs()
    } else if p == 2.0 {
        d * d
    } else {
        d.abs().powf(p)
    }
}

fn root(v: f64, p: f64) -> f64 {
    if p == 1.0 {
        v
    } else if p == 2.0 {
        v.sqrt()
    } else {
        v.powf(1.0 / p)
    }
}

/// Wasserstein-p distance between two empirical measures of any sizes,
/// integrating |F⁻¹(t) − G⁻¹(t)|ᵖ over the merged quantile breakpoints.
pub fn wasserstein_empirical(xs: &[f64], ys: &[f64], p: f64) -> Result<f64> {
    need(xs, 1)?;
    need(ys, 1)?;
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as u128, b.len() as u128);
    let scale = (n * m) as f64;
    // breakpoints i/N and j/M expressed as integers over N·M
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0u128;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i as u128 + 1) * m;
        let next_b = (j as u128 + 1) * n;
        let next = next_a.min(next_b);
        total += (next - t) as f64 / scale * power(a[i] - b[j], p);
        t = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(root(total, p))
}

/// Vasicek m-spacing entropy estimate with m = ⌊√N⌋ and the
/// Wieczorkowski–Grzegorzewski bias correction.
pub fn vasicek_entropy(xs: &[f64]) -> Result<f64> {
    need(xs, 3)?;
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let m = ((n as f64).sqrt().floor() as usize).clamp(1, (n - 1) / 2);
    let mut log_spacings = 0.0;
    for i in 0..n {
        let hi = s[(i + m).min(n - 1)];
        let lo = s[i.saturating_sub(m)];
        // tied order statistics give a finite but heavily penalized value
        log_spacings += (hi - lo).max(f64::MIN_POSITIVE).ln();
    }
    let nf = n as f64;
    let mf = m as f64;
    let tail: f64 = (1..=m).map(|i| digamma((i + m - 1) as f64)).sum();
    Ok(log_spacings / nf - (1.0 - 2.0 * mf / nf) * digamma(2.0 * mf) + digamma(nf + 1.0)
        - 2.0 / nf * tail)
}

/// KL divergence to a Gaussian target up to the target-only constant:
/// (1/(2σ²))·mean((x−m)²) − Ĥ(xs).
pub fn kl_gaussian_objective(xs: &[f64], target: &TargetSpec) -> Result<f64> {
    let (m, sigma) = match *target {
        TargetSpec::Gaussian { m, sigma } => (m, sigma),
        _ => return Err(Error::Domain("the KL objective needs a Gaussian target".into())),
    };
    need(xs, 10)?;
    let quad = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    Ok(quad / (2.0 * sigma * sigma) - vasicek_entropy(xs)?)
}
