//! Closed-form kernel mean embeddings μ(x) = E_{Y∼Q} k(x, Y) and the constant
//! term E_{X,Y∼Q} k(X, Y), plus the incomplete-beta series behind the bounded
//! (beta-target) cases.
//!
//! The series are
//!
//! ```text
//! E₁^λ(z, a, b) = ∫₀ᶻ yᵃ(1−y)ᵇ e^{λy} dy  = Σₖ λᵏ/k! · B(a+k+1, b+1; z)
//! E₂^λ(z, a, b) = ∫_z¹ yᵃ(1−y)ᵇ e^{−λy} dy = Σₖ (−λ)ᵏ/k! · [B(a+k+1, b+1) − B(a+k+1, b+1; z)]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, MaternPoly};
use crate::special::{
    inc_beta_pair, inc_beta_pair_split, integrate, ln_beta, ln_gamma, norm_cdf, NeumaierSum,
};
use crate::targets::TargetSpec;

/// Absolute accuracy targeted by every embedding path unless overridden.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Largest truncation order `choose_truncation` will consider.
pub const K_MAX: usize = 500;

/// A truncated series value with an upper bound on its distance to the full series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Taylor remainder envelope plus an allowance for floating-point rounding.
    pub bound: f64,
    /// The Taylor remainder envelope alone.
    pub truncation_bound: f64,
}

fn check_series_args(z: f64, a: f64, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("z = {z} is not in [0, 1]")));
    }
    if !(a > -1.0) || !(b > -1.0) {
        return Err(Error::Domain(format!("series exponents must exceed -1, got a = {a}, b = {b}")));
    }
    Ok(())
}

/// zᵖ(1−z)^q with zc = 1 − z, zero at the endpoints.
fn edge_factor(p: f64, q: f64, z: f64, zc: f64) -> f64 {
    if z <= 0.0 || zc <= 0.0 {
        return 0.0;
    }
    (p * z.ln() + q * zc.ln()).exp()
}

/// B(a+k+1, b+1; z) for k = 0..=top. The top entry comes from the continued
/// fraction and the rest from the downward recurrence
/// B(p, q; z) = ((p+q)·B(p+1, q; z) + zᵖ(1−z)^q)/p, whose terms are all positive.
/// `zc` is 1 − z, passed separately so that z near 1 keeps its complement.
fn lower_ladder(a: f64, b: f64, z: f64, zc: f64, top: usize) -> Vec<f64> {
    let q = b + 1.0;
    let mut out = vec![0.0; top + 1];
    if z <= 0.0 {
        return out;
    }
    out[top] = inc_beta_pair_split(a + top as f64 + 1.0, q, z, zc).0;
    for k in (0..top).rev() {
        let p = a + k as f64 + 1.0;
        out[k] = ((p + q) * out[k + 1] + edge_factor(p, q, z, zc)) / p;
    }
    out
}

/// ∫_z¹ y^{a+k}(1−y)ᵇ dy for k = 0..=top, by the upward recurrence
/// U(p+1) = (p·U(p) + zᵖ(1−z)^q)/(p+q), again free of cancellation.
fn upper_ladder(a: f64, b: f64, z: f64, top: usize) -> Vec<f64> {
    let q = b + 1.0;
    let mut out = vec![0.0; top + 1];
    if z >= 1.0 {
        return out;
    }
    out[0] = inc_beta_pair(a + 1.0, q, z).1;
    for k in 0..top {
        let p = a + k as f64 + 1.0;
        out[k + 1] = (p * out[k] + edge_factor(p, q, z, 1.0 - z)) / (p + q);
    }
    out
}

/// Relative error allowance for one incomplete-beta evaluation with first
/// parameter up to `p`.
fn beta_relative_error(p: f64, q: f64, z: f64) -> f64 {
    // log-gamma values enter B(p, q) with absolute, not relative, rounding error
    let mut scale = 64.0 + 8.0 * (ln_gamma(p).abs() + ln_gamma(q).abs() + ln_gamma(p + q).abs());
    if z > 0.0 && z < 1.0 {
        scale += (p * z.ln()).abs() + (q * (-z).ln_1p()).abs();
    }
    scale * f64::EPSILON
}

fn taylor_coefficients(lambda: f64, k: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(k + 1);
    let mut t = 1.0;
    c.push(t);
    for j in 1..=k {
        t *= lambda / j as f64;
        c.push(t);
    }
    c
}

fn remainder_factor(lambda: f64, k: usize) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    ((k as f64 + 1.0) * lambda.abs().ln() - ln_gamma(k as f64 + 2.0)).exp()
}

fn assemble(coeffs: &[f64], ladder: &[f64], truncation_bound: f64, rel: f64) -> SeriesValue {
    let mut sum = NeumaierSum::new();
    let mut mag = 0.0;
    for (c, l) in coeffs.iter().zip(ladder) {
        let t = c * l;
        sum.add(t);
        mag += t.abs();
    }
    let rounding = mag * (rel + 4.0 * (coeffs.len() as f64 + 1.0) * f64::EPSILON);
    SeriesValue {
        value: sum.value(),
        bound: truncation_bound + rounding,
        truncation_bound,
    }
}

/// K-term truncation of E₁^λ(z, a, b).
pub fn e1(lambda: f64, z: f64, a: f64, b: f64, k: usize) -> Result<SeriesValue> {
    check_series_args(z, a, b)?;
    let ladder = lower_ladder(a, b, z, 1.0 - z, k + 1);
    let coeffs = taylor_coefficients(lambda, k);
    let envelope = remainder_factor(lambda, k) * (lambda * z).exp().max(1.0) * ladder[k + 1];
    let rel = beta_relative_error(a + k as f64 + 2.0, b + 1.0, z);
    Ok(assemble(&coeffs, &ladder[..=k], envelope, rel))
}

/// K-term truncation of E₂^λ(z, a, b). The alternating terms are accumulated
/// with compensated summation.
///
/// The remainder envelope is |λ|^{K+1}/(K+1)! · max(1, e^{−λ}) · ∫_z¹ y^{a+K+1}(1−y)ᵇ dy.
/// The Lagrange point of the Taylor remainder of e^{−λy} lies in (0, y), so a
/// factor e^{−λz} would not bound it for λ > 0.
pub fn e2(lambda: f64, z: f64, a: f64, b: f64, k: usize) -> Result<SeriesValue> {
    check_series_args(z, a, b)?;
    let ladder = upper_ladder(a, b, z, k + 1);
    let coeffs = taylor_coefficients(-lambda, k);
    let envelope = remainder_factor(lambda, k) * (-lambda).exp().max(1.0) * ladder[k + 1];
    let rel = beta_relative_error(a + k as f64 + 2.0, b + 1.0, z);
    Ok(assemble(&coeffs, &ladder[..=k], envelope, rel))
}

/// Smallest K ≥ ⌈|λ|⌉ + 10 whose E₁ and E₂ remainder envelopes are both at most `tol`.
pub fn choose_truncation(lambda: f64, a: f64, b: f64, z: f64, tol: f64) -> Result<usize> {
    check_series_args(z, a, b)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let start = lambda.abs().ceil() as usize + 10;
    if start > K_MAX {
        return Err(Error::TruncationFailure { lambda, tol, k_max: K_MAX });
    }
    let lower = lower_ladder(a, b, z, 1.0 - z, K_MAX + 1);
    let upper = upper_ladder(a, b, z, K_MAX + 1);
    for k in start..=K_MAX {
        let r = remainder_factor(lambda, k);
        let env1 = r * (lambda * z).exp().max(1.0) * lower[k + 1];
        let env2 = r * (-lambda).exp().max(1.0) * upper[k + 1];
        if env1 <= tol && env2 <= tol {
            return Ok(k);
        }
    }
    Err(Error::TruncationFailure { lambda, tol, k_max: K_MAX })
}

/// Truncation order for E₁^λ(z, ·, ·) with λ ≥ 0 and positive terms: the
/// remainder relative to the value is at most (λz)^{K+1} e^{λz}/(K+1)!.
fn relative_truncation(lambda: f64, z: f64, rel_tol: f64) -> Result<usize> {
    let lz = lambda * z;
    let start = lambda.abs().ceil() as usize + 10;
    if lz == 0.0 {
        return Ok(start.min(K_MAX));
    }
    let target = rel_tol.ln();
    for k in start..=K_MAX {
        let log_rem = (k as f64 + 1.0) * lz.ln() + lz - ln_gamma(k as f64 + 2.0);
        if log_rem <= target {
            return Ok(k);
        }
    }
    Err(Error::TruncationFailure { lambda, tol: rel_tol, k_max: K_MAX })
}

/// E₁^λ(z, a+j, b) for j = 0..=extra, λ ≥ 0, from one shared ladder; zc = 1 − z.
fn e1_family(lambda: f64, z: f64, zc: f64, a: f64, b: f64, extra: usize, k: usize) -> Vec<f64> {
    if z <= 0.0 {
        return vec![0.0; extra + 1];
    }
    let ladder = lower_ladder(a, b, z, zc, k + extra);
    let coeffs = taylor_coefficients(lambda, k);
    (0..=extra)
        .map(|j| {
            let mut s = 0.0;
            // smallest terms first
            for i in (0..=k).rev() {
                s += coeffs[i] * ladder[i + j];
            }
            s
        })
        .collect()
}

/// A (target, kernel) pair with a closed-form mean embedding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub target: TargetSpec,
    pub kernel: KernelSpec,
    /// Fixed series order for the beta paths; chosen from `tolerance` when absent.
    #[serde(default)]
    pub truncation_order: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Debug)]
enum Plan {
    /// μ(x) = scale · exp(A x² + B x + C)
    Quadratic { scale: f64, qa: f64, qb: f64, qc: f64 },
    SkewGaussian { s: f64, m: f64, v: f64, a: f64 },
    BetaLaplacian { alpha: f64, beta: f64, lambda: f64 },
    BetaMatern { alpha: f64, beta: f64, poly: MaternPoly },
}

impl EmbeddingPair {
    pub fn new(target: TargetSpec, kernel: KernelSpec) -> Result<Self> {
        let pair = Self {
            target,
            kernel,
            truncation_order: None,
            tolerance: DEFAULT_TOLERANCE,
        };
        pair.plan()?;
        Ok(pair)
    }

    pub fn with_truncation_order(mut self, k: usize) -> Self {
        self.truncation_order = Some(k);
        self
    }

    /// Whether the pair has a closed-form embedding.
    pub fn is_supported(target: &TargetSpec, kernel: &KernelSpec) -> bool {
        EmbeddingPair::new(*target, *kernel).is_ok()
    }

    fn unsupported(&self) -> Error {
        Error::UnsupportedPair {
            target: self.target.name().to_string(),
            kernel: self.kernel.name().to_string(),
        }
    }

    fn plan(&self) -> Result<Plan> {
        self.target.validate()?;
        self.kernel.validate()?;
        match (self.target, self.kernel) {
            (TargetSpec::Gaussian { m, sigma }, k) => {
                let (a, b) = match k {
                    KernelSpec::GaussianExponentiated { a, b } => (a, b),
                    KernelSpec::Gaussian { c } => (1.0 / (2.0 * c * c), 0.0),
                    KernelSpec::Exponential { b } => (0.0, b),
                    _ => return Err(self.unsupported()),
                };
                let s2 = sigma * sigma;
                if b > 0.0 && b * s2 >= 1.0 {
                    return Err(Error::DivergentParameter(format!(
                        "b·σ² = {} must be below 1 for the mean embedding",
                        b * s2
                    )));
                }
                let p = 1.0 + 2.0 * a * s2;
                Ok(Plan::Quadratic {
                    scale: 1.0 / p.sqrt(),
                    qa: (b * (b + 4.0 * a) * s2 - 2.0 * a) / (2.0 * p),
                    qb: (2.0 * a + b) * m / p,
                    qc: -a * m * m / p,
                })
            }
            (TargetSpec::SkewGaussian { s, m, v }, k) => {
                let a = match k {
                    KernelSpec::Gaussian { c } => 1.0 / (2.0 * c * c),
                    KernelSpec::GaussianExponentiated { a, b } if b == 0.0 && a > 0.0 => a,
                    _ => return Err(self.unsupported()),
                };
                Ok(Plan::SkewGaussian { s, m, v, a })
            }
            (TargetSpec::Beta { .. } | TargetSpec::Uniform, k) => {
                let (alpha, beta) = self.target.beta_parameters().unwrap();
                match k {
                    KernelSpec::Laplacian { lambda } => Ok(Plan::BetaLaplacian { alpha, beta, lambda }),
                    KernelSpec::Matern { sigma0, sigma, p } => Ok(Plan::BetaMatern {
                        alpha,
                        beta,
                        poly: MaternPoly::new(sigma0, sigma, p),
                    }),
                    _ => Err(self.unsupported()),
                }
            }
            _ => Err(self.unsupported()),
        }
    }

    fn series_order(&self, lambda: f64, z: f64, rel_tol: f64) -> Result<usize> {
        match self.truncation_order {
            Some(k) => Ok(k),
            None => relative_truncation(lambda, z, rel_tol),
        }
    }

    /// μ(x) = ∫ k(x, y) dQ(y).
    pub fn mean_embedding(&self, x: f64) -> Result<f64> {
        let plan = self.plan()?;
        self.eval_plan(&plan, x)
    }

    /// μ at every point of `xs`.
    pub fn mean_embedding_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let plan = self.plan()?;
        xs.iter().map(|&x| self.eval_plan(&plan, x)).collect()
    }

    fn eval_plan(&self, plan: &Plan, x: f64) -> Result<f64> {
        match *plan {
            Plan::Quadratic { scale, qa, qb, qc } => Ok(scale * ((qa * x + qb) * x + qc).exp()),
            Plan::SkewGaussian { s, m, v, a } => {
                let p = 1.0 + 2.0 * a * v;
                let d = x - m;
                let arg = 2.0 * a * s * v.sqrt() * d / (p.sqrt() * (p + s * s).sqrt());
                Ok(2.0 / p.sqrt() * (-a * d * d / p).exp() * norm_cdf(arg))
            }
            Plan::BetaLaplacian { alpha, beta, lambda } => {
                self.beta_laplacian(alpha, beta, lambda, x)
            }
            Plan::BetaMatern { alpha, beta, ref poly } => self.beta_matern(alpha, beta, poly, x),
        }
    }

    /// (1/B(α,β)) [e^{−λx} E₁^λ(z, α−1, β−1) + e^{λx} E₂^λ(z, α−1, β−1)], z = clamp(x, 0, 1).
    /// E₂ is evaluated through E₂^λ(z, a, b) = e^{−λ} E₁^λ(1−z, b, a).
    fn beta_laplacian(&self, alpha: f64, beta: f64, lambda: f64, x: f64) -> Result<f64> {
        let z = x.clamp(0.0, 1.0);
        let zc = (1.0 - x).clamp(0.0, 1.0);
        let (a, b) = (alpha - 1.0, beta - 1.0);
        let rel = self.tolerance * 1e-2;
        let left = if z > 0.0 {
            let k = self.series_order(lambda, z, rel)?;
            (-lambda * x).exp() * e1_family(lambda, z, zc, a, b, 0, k)[0]
        } else {
            0.0
        };
        let right = if zc > 0.0 {
            let k = self.series_order(lambda, zc, rel)?;
            (-lambda * (1.0 - x)).exp() * e1_family(lambda, zc, z, b, a, 0, k)[0]
        } else {
            0.0
        };
        Ok((left + right) / ln_beta(alpha, beta).exp())
    }

    /// Double sum over the Matérn polynomial degree n and the binomial index k:
    /// (1/B) Σₙ cₙ Σₖ C(n,k) xᵏ [(−1)^{n−k} e^{−θx} E₁(n−k) + (−1)ᵏ e^{θx} E₂(n−k)],
    /// with E_i(j) evaluated at exponents (α−1+j, β−1).
    fn beta_matern(&self, alpha: f64, beta: f64, poly: &MaternPoly, x: f64) -> Result<f64> {
        let theta = poly.theta;
        let p = poly.p();
        let z = x.clamp(0.0, 1.0);
        let zc = (1.0 - x).clamp(0.0, 1.0);
        let (a, b) = (alpha - 1.0, beta - 1.0);
        let magnitude: f64 = poly
            .coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| c.abs() * (1.0 + x.abs()).powi(n as i32))
            .sum();
        let rel = self.tolerance * 1e-2 / magnitude.max(1.0);
        let lower = if z > 0.0 {
            let k = self.series_order(theta, z, rel)?;
            e1_family(theta, z, zc, a, b, p, k)
        } else {
            vec![0.0; p + 1]
        };
        let upper: Vec<f64> = if zc > 0.0 {
            let k = self.series_order(theta, zc, rel)?;
            (0..=p)
                .map(|j| e1_family(theta, zc, z, b, a + j as f64, 0, k)[0])
                .collect()
        } else {
            vec![0.0; p + 1]
        };
        let wl = (-theta * x).exp();
        let wu = (-theta * (1.0 - x)).exp();
        let mut total = NeumaierSum::new();
        for (n, &cn) in poly.coeffs.iter().enumerate() {
            let mut binom = 1.0;
            let mut xk = 1.0;
            for k in 0..=n {
                let j = n - k;
                let sl = if j % 2 == 0 { 1.0 } else { -1.0 };
                let su = if k % 2 == 0 { 1.0 } else { -1.0 };
                total.add(cn * binom * xk * (sl * wl * lower[j] + su * wu * upper[j]));
                binom = binom * (n - k) as f64 / (k + 1) as f64;
                xk *= x;
            }
        }
        Ok(total.value() / ln_beta(alpha, beta).exp())
    }

    /// E_{X,Y∼Q} k(X, Y): closed form for the Gaussian target, otherwise
    /// quadrature of q(t)·μ(t) to absolute accuracy `tol`.
    pub fn double_expectation(&self, tol: f64) -> Result<f64> {
        let plan = self.plan()?;
        match (plan, self.target) {
            (Plan::Quadratic { scale, qa, qb, qc }, TargetSpec::Gaussian { m, sigma }) => {
                let s2 = sigma * sigma;
                let denom = 1.0 - 2.0 * qa * s2;
                if !(denom > 0.0) {
                    return Err(Error::DivergentParameter(format!(
                        "E k(X, Y) is infinite for this kernel and σ = {sigma}"
                    )));
                }
                let expo = (2.0 * qa * m * m + 2.0 * qb * m + qb * qb * s2) / (2.0 * denom) + qc;
                Ok(scale * expo.exp() / denom.sqrt())
            }
            (plan @ Plan::SkewGaussian { .. }, target) => {
                let mom = target.moments();
                let sd = mom.variance.sqrt();
                let (lo, hi) = (mom.mean - 14.0 * sd, mom.mean + 14.0 * sd);
                let f = |t: f64| target.pdf(t) * self.eval_plan(&plan, t).unwrap_or(f64::NAN);
                let value = integrate(f, lo, hi, tol * 1e-2);
                finite_or_divergent(value)
            }
            (plan, target) => {
                let (alpha, beta) = match target {
                    TargetSpec::Beta { alpha, beta } => (alpha, beta),
                    _ => (1.0, 1.0),
                };
                // the first evaluation surfaces truncation failures before quadrature
                self.eval_plan(&plan, 0.5)?;
                let mu = |t: f64| self.eval_plan(&plan, t).unwrap_or(f64::NAN);
                // t = u^{1/α} on [0, ½] and 1 − t = v^{1/β} on [½, 1] absorb the
                // endpoint singularities of the density
                let lower = |u: f64| {
                    let t = u.powf(1.0 / alpha);
                    mu(t) * (1.0 - t).powf(beta - 1.0)
                };
                let upper = |v: f64| {
                    let t = v.powf(1.0 / beta);
                    mu(1.0 - t) * (1.0 - t).powf(alpha - 1.0)
                };
                let scale = ln_beta(alpha, beta).exp();
                let value = (integrate(lower, 0.0, 0.5f64.powf(alpha), tol * 1e-2) / alpha
                    + integrate(upper, 0.0, 0.5f64.powf(beta), tol * 1e-2) / beta)
                    / scale;
                finite_or_divergent(value)
            }
        }
    }
}

fn finite_or_divergent(value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::DivergentParameter("non-finite embedding integral".into()))
    }
}

/// μ(x) by adaptive quadrature of k(x, ·) against the target density, with a
/// break at x where the kernel has a kink. Slow; meant for checking the
/// closed forms.
pub fn mean_embedding_quadrature(target: &TargetSpec, kernel: &KernelSpec, x: f64, tol: f64) -> Result<f64> {
    target.validate()?;
    kernel.validate()?;
    let k = |y: f64| kernel.eval(x, y);
    let pieces = |pts: &mut Vec<f64>, f: &dyn Fn(f64) -> f64| {
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let share = tol / pts.len() as f64;
        pts.windows(2).map(|w| integrate(f, w[0], w[1], share)).sum::<f64>()
    };
    let value = match target.beta_parameters() {
        Some((alpha, beta)) => {
            // same substitutions as the constant term, split at x
            let lower = |u: f64| {
                let t = u.powf(1.0 / alpha);
                k(t) * (1.0 - t).powf(beta - 1.0)
            };
            let upper = |v: f64| {
                let t = v.powf(1.0 / beta);
                k(1.0 - t) * (1.0 - t).powf(alpha - 1.0)
            };
            let mut lo = vec![0.0, 0.5f64.powf(alpha)];
            if x > 0.0 && x < 0.5 {
                lo.push(x.powf(alpha));
            }
            let mut hi = vec![0.0, 0.5f64.powf(beta)];
            if x > 0.5 && x < 1.0 {
                hi.push((1.0 - x).powf(beta));
            }
            (pieces(&mut lo, &lower) / alpha + pieces(&mut hi, &upper) / beta) / ln_beta(alpha, beta).exp()
        }
        None => {
            let mom = target.moments();
            let sd = mom.variance.sqrt();
            let (lo, hi) = (mom.mean - 40.0 * sd, mom.mean + 40.0 * sd);
            let mut pts = vec![lo, mom.mean, hi];
            if x > lo && x < hi {
                pts.push(x);
            }
            pieces(&mut pts, &|y| k(y) * target.pdf(y))
        }
    };
    finite_or_divergent(value)
}

/// The exact squared MMD between N(m₀, σ²) and N(m₁, σ²) under the exponential
/// kernel e^{bxy}, valid for 0 < b < 1/(2σ²):
///
/// (1/√(1−c̄²)) [e^{bm₀²/(1−c̄)} + e^{bm₁²/(1−c̄)} − 2 e^{(bc̄(m₀²+m₁²) + 2bm₀m₁)/(2(1−c̄²))}], c̄ = bσ².
pub fn mmd2_gaussian_exponential(m0: f64, m1: f64, sigma: f64, b: f64) -> Result<f64> {
    let cbar = b * sigma * sigma;
    if !(b > 0.0) || cbar >= 0.5 {
        return Err(Error::DivergentParameter(format!(
            "closed form needs 0 < b·σ² < 1/2, got {cbar}"
        )));
    }
    let norm = 1.0 / (1.0 - cbar * cbar).sqrt();
    let self0 = (b * m0 * m0 / (1.0 - cbar)).exp();
    let self1 = (b * m1 * m1 / (1.0 - cbar)).exp();
    let cross =
        ((b * cbar * (m0 * m0 + m1 * m1) + 2.0 * b * m0 * m1) / (2.0 * (1.0 - cbar * cbar))).exp();
    Ok(norm * (self0 + self1 - 2.0 * cross))
}

/// E_{Y∼N(m,σ²)} e^{−a(x−Y)²}: the Gaussian-kernel embedding of a Gaussian, c/√(σ²+c²)·e^{−(x−m)²/(2(σ²+c²))}.
pub fn gaussian_gaussian_embedding(m: f64, sigma: f64, c: f64, x: f64) -> f64 {
    let s = sigma * sigma + c * c;
    c / s.sqrt() * (-(x - m) * (x - m) / (2.0 * s)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_embedding_agrees_with_closed_forms() {
        let cases = [
            (TargetSpec::Gaussian { m: 0.3, sigma: 0.9 }, KernelSpec::Gaussian { c: 0.7 }),
            (TargetSpec::Beta { alpha: 0.6, beta: 2.5 }, KernelSpec::Laplacian { lambda: 3.0 }),
            (TargetSpec::Uniform, KernelSpec::Matern { sigma0: 1.0, sigma: 0.4, p: 1 }),
        ];
        for (target, kernel) in cases {
            let pair = EmbeddingPair::new(target, kernel).unwrap();
            for x in [-0.7, 0.2, 0.5, 0.9, 1.6] {
                let q = mean_embedding_quadrature(&target, &kernel, x, 1e-12).unwrap();
                assert!((q - pair.mean_embedding(x).unwrap()).abs() < 1e-9, "{target:?} {kernel:?} at {x}");
            }
        }
    }

    #[test]
    fn e1_documented_values() {
        let v = e1(0.0, 1.0, 0.0, 0.0, 0).unwrap();
        assert!((v.value - 1.0).abs() < 1e-14);
        assert_eq!(v.truncation_bound, 0.0);
        let v = e1(1.0, 1.0, 0.0, 0.0, 20).unwrap();
        let exact = std::f64::consts::E - 1.0;
        assert!((v.value - exact).abs() <= v.bound);
        assert!((v.value - exact).abs() < 1e-12);
    }

    #[test]
    fn series_rejects_bad_arguments() {
        assert!(matches!(e1(1.0, 1.5, 0.0, 0.0, 3), Err(Error::Domain(_))));
        assert!(matches!(e2(1.0, 0.5, -1.0, 0.0, 3), Err(Error::Domain(_))));
        assert!(matches!(choose_truncation(1.0, 0.0, 0.0, 0.5, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn truncation_order_tracks_lambda() {
        assert!(choose_truncation(25.0, 0.0, 0.0, 0.5, 1e-10).unwrap() >= 25);
        assert_eq!(choose_truncation(0.0, 0.0, 0.0, 0.5, 1e-8).unwrap(), 10);
        assert!(matches!(
            choose_truncation(600.0, 0.0, 0.0, 0.5, 1e-10),
            Err(Error::TruncationFailure { .. })
        ));
    }

    #[test]
    fn ladders_agree_with_direct_evaluation() {
        let (a, b, z) = (0.3, 1.7, 0.62);
        let lo = lower_ladder(a, b, z, 1.0 - z, 40);
        let up = upper_ladder(a, b, z, 40);
        for k in [0usize, 1, 7, 23, 40] {
            let (l, u) = inc_beta_pair(a + k as f64 + 1.0, b + 1.0, z);
            assert!((lo[k] - l).abs() <= 1e-13 * l, "lower {k}");
            assert!((up[k] - u).abs() <= 1e-13 * u, "upper {k}");
        }
    }

    #[test]
    fn gaussian_pair_documented_values() {
        let g = EmbeddingPair::new(
            TargetSpec::Gaussian { m: 0.0, sigma: 1.0 },
            KernelSpec::Gaussian { c: 1.0 },
        )
        .unwrap();
        assert!((g.mean_embedding(0.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((g.double_expectation(1e-10).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let e = EmbeddingPair::new(
            TargetSpec::Gaussian { m: 0.0, sigma: 1.0 },
            KernelSpec::Exponential { b: 0.3 },
        )
        .unwrap();
        assert!((e.double_expectation(1e-10).unwrap() - 1.0 / 0.91f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn exponential_kernel_limits() {
        let pair = EmbeddingPair::new(
            TargetSpec::Gaussian { m: 0.0, sigma: 1.0 },
            KernelSpec::Exponential { b: 1.0 },
        );
        assert!(matches!(pair, Err(Error::DivergentParameter(_))));
        assert!(mmd2_gaussian_exponential(0.0, 1.0, 1.0, 0.5).is_err());
        assert_eq!(mmd2_gaussian_exponential(0.4, 0.4, 1.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn unsupported_pairs_are_rejected() {
        let bad = [
            (TargetSpec::Beta { alpha: 2.0, beta: 2.0 }, KernelSpec::Gaussian { c: 1.0 }),
            (TargetSpec::Gaussian { m: 0.0, sigma: 1.0 }, KernelSpec::Laplacian { lambda: 1.0 }),
            (
                TargetSpec::GeneralizedNormal { alpha: 0.0, beta: 1.0, gamma: 1.0 },
                KernelSpec::Gaussian { c: 1.0 },
            ),
            (TargetSpec::SkewGaussian { s: 1.0, m: 0.0, v: 1.0 }, KernelSpec::Exponential { b: 0.1 }),
        ];
        for (t, k) in bad {
            assert!(matches!(EmbeddingPair::new(t, k), Err(Error::UnsupportedPair { .. })));
        }
    }

    #[test]
    fn uniform_laplacian_midpoint() {
        let pair = EmbeddingPair::new(TargetSpec::Uniform, KernelSpec::Laplacian { lambda: 1.0 }).unwrap();
        let want = 2.0 * (1.0 - (-0.5f64).exp());
        assert!((pair.mean_embedding(0.5).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn beta_embeddings_are_continuous_at_the_support_edges() {
        // small α puts visible mass below 1e-20, so 1 − x must not be rounded to 1
        let target = TargetSpec::Beta { alpha: 0.03, beta: 0.7 };
        for kernel in [KernelSpec::Laplacian { lambda: 3.0 }, KernelSpec::Matern { sigma0: 1.0, sigma: 0.3, p: 1 }] {
            let pair = EmbeddingPair::new(target, kernel).unwrap();
            let at = |x: f64| pair.mean_embedding(x).unwrap();
            assert!((at(1e-20) - at(0.0)).abs() < 1e-12, "{kernel:?}");
            assert!((at(-1e-20) - at(0.0)).abs() < 1e-12);
            let flipped = EmbeddingPair::new(TargetSpec::Beta { alpha: 0.7, beta: 0.03 }, kernel).unwrap();
            assert!((flipped.mean_embedding(1.0 - 1e-16).unwrap() - at(0.0)).abs() < 1e-10);
            assert!(at(1e-20) <= 1.0);
        }
    }
}
