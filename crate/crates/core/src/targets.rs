//! Target return distributions: density, score, moments, sampling and quantiles.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{finite, positive, Error, Result};
use crate::special::{
    gamma, inc_beta_reg, inv_inc_beta_reg, inverse_mills, ln_beta, ln_gamma, norm_cdf, norm_pdf,
    norm_quantile, owens_t, solve_monotone,
};

/// A univariate target distribution for portfolio returns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian { m: f64, sigma: f64 },
    /// Density ∝ exp(−½(|x−α|/β)^γ).
    GeneralizedNormal { alpha: f64, beta: f64, gamma: f64 },
    /// Density 2 v^{−1/2} φ((x−m)/√v) Φ(s(x−m)/√v).
    SkewGaussian { s: f64, m: f64, v: f64 },
    Beta { alpha: f64, beta: f64 },
    Uniform,
}

/// Mean, variance, skewness and excess kurtosis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetSpec::Gaussian { m, sigma } => {
                finite("m", m)?;
                positive("sigma", sigma)
            }
            TargetSpec::GeneralizedNormal { alpha, beta, gamma } => {
                finite("alpha", alpha)?;
                positive("beta", beta)?;
                positive("gamma", gamma)
            }
            TargetSpec::SkewGaussian { s, m, v } => {
                finite("s", s)?;
                finite("m", m)?;
                positive("v", v)
            }
            TargetSpec::Beta { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            TargetSpec::Uniform => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetSpec::Gaussian { .. } => "gaussian",
            TargetSpec::GeneralizedNormal { .. } => "generalized_normal",
            TargetSpec::SkewGaussian { .. } => "skew_gaussian",
            TargetSpec::Beta { .. } => "beta",
            TargetSpec::Uniform => "uniform",
        }
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        match self {
            TargetSpec::Beta { .. } | TargetSpec::Uniform => (0.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Beta parameters for the bounded families (the uniform is Beta(1, 1)).
    pub fn beta_parameters(&self) -> Option<(f64, f64)> {
        match *self {
            TargetSpec::Beta { alpha, beta } => Some((alpha, beta)),
            TargetSpec::Uniform => Some((1.0, 1.0)),
            _ => None,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            TargetSpec::Gaussian { m, sigma } => norm_pdf((x - m) / sigma) / sigma,
            TargetSpec::GeneralizedNormal { alpha, beta, gamma: g } => {
                let norm = 2f64.powf(-(g + 1.0) / g) * g / (beta * gamma(1.0 / g));
                norm * (-0.5 * ((x - alpha).abs() / beta).powf(g)).exp()
            }
            TargetSpec::SkewGaussian { s, m, v } => {
                let sd = v.sqrt();
                let z = (x - m) / sd;
                2.0 / sd * norm_pdf(z) * norm_cdf(s * z)
            }
            TargetSpec::Beta { .. } | TargetSpec::Uniform => {
                let (a, b) = self.beta_parameters().unwrap();
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                if a == 1.0 && b == 1.0 {
                    return 1.0;
                }
                ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
            }
        }
    }

    /// d/dx log q(x).
    pub fn score(&self, x: f64) -> Result<f64> {
        match *self {
            TargetSpec::Gaussian { m, sigma } => Ok(-(x - m) / (sigma * sigma)),
            TargetSpec::GeneralizedNormal { alpha, beta, gamma } => {
                let d = x - alpha;
                if d == 0.0 && gamma <= 1.0 {
                    return Err(Error::OutOfSupport { x });
                }
                Ok(-gamma * d.abs().powf(gamma - 1.0) * sign(d) / (2.0 * beta.powf(gamma)))
            }
            TargetSpec::SkewGaussian { s, m, v } => {
                let sd = v.sqrt();
                let z = s * (x - m) / sd;
                Ok(-(x - m) / v + s / sd * inverse_mills(z))
            }
            TargetSpec::Beta { .. } | TargetSpec::Uniform => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::OutOfSupport { x });
                }
                let (a, b) = self.beta_parameters().unwrap();
                Ok((a - 1.0) / x + (b - 1.0) / (x - 1.0))
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            TargetSpec::Gaussian { m, sigma } => norm_cdf((x - m) / sigma),
            TargetSpec::GeneralizedNormal { alpha, beta, gamma } => {
                let d = x - alpha;
                let t = 0.5 * (d.abs() / beta).powf(gamma);
                // tail side via the upper incomplete gamma to keep relative accuracy
                let upper = 0.5 * statrs::function::gamma::gamma_ur(1.0 / gamma, t);
                if d >= 0.0 {
                    1.0 - upper
                } else {
                    upper
                }
            }
            TargetSpec::SkewGaussian { s, m, v } => {
                let z = (x - m) / v.sqrt();
                (norm_cdf(z) - 2.0 * owens_t(z, s)).clamp(0.0, 1.0)
            }
            TargetSpec::Beta { .. } | TargetSpec::Uniform => {
                let (a, b) = self.beta_parameters().unwrap();
                inc_beta_reg(a, b, x.clamp(0.0, 1.0))
            }
        }
    }

    /// Quantile function F⁻¹(u) for u ∈ (0, 1).
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level {u} is not in (0, 1)")));
        }
        Ok(match *self {
            TargetSpec::Gaussian { m, sigma } => m + sigma * norm_quantile(u),
            TargetSpec::Uniform => u,
            TargetSpec::Beta { alpha, beta } => inv_inc_beta_reg(alpha, beta, u),
            TargetSpec::GeneralizedNormal { .. } | TargetSpec::SkewGaussian { .. } => {
                let mom = self.moments();
                let sd = mom.variance.sqrt();
                let guess = mom.mean + sd * norm_quantile(u);
                let mut lo = guess - sd;
                let mut hi = guess + sd;
                let mut step = sd;
                while self.cdf(lo) > u {
                    step *= 2.0;
                    lo -= step;
                }
                step = sd;
                while self.cdf(hi) < u {
                    step *= 2.0;
                    hi += step;
                }
                solve_monotone(|x| self.cdf(x) - u, |x| self.pdf(x), lo, hi, guess, 1e-12)
            }
        })
    }

    pub fn moments(&self) -> MomentSet {
        match *self {
            TargetSpec::Gaussian { m, sigma } => MomentSet {
                mean: m,
                variance: sigma * sigma,
                skewness: 0.0,
                excess_kurtosis: 0.0,
            },
            TargetSpec::GeneralizedNormal { alpha, beta, gamma: g } => {
                let lg1 = ln_gamma(1.0 / g);
                let lg3 = ln_gamma(3.0 / g);
                let lg5 = ln_gamma(5.0 / g);
                MomentSet {
                    mean: alpha,
                    variance: beta * beta * 4f64.powf(1.0 / g) * (lg3 - lg1).exp(),
                    skewness: 0.0,
                    excess_kurtosis: (lg5 + lg1 - 2.0 * lg3).exp() - 3.0,
                }
            }
            TargetSpec::SkewGaussian { s, m, v } => {
                let delta = s / (1.0 + s * s).sqrt();
                let mu_z = delta * (2.0 / PI).sqrt();
                let var_z = 1.0 - mu_z * mu_z;
                MomentSet {
                    mean: m + v.sqrt() * mu_z,
                    variance: v * var_z,
                    skewness: 0.5 * (4.0 - PI) * mu_z.powi(3) / var_z.powf(1.5),
                    excess_kurtosis: 2.0 * (PI - 3.0) * mu_z.powi(4) / (var_z * var_z),
                }
            }
            TargetSpec::Beta { .. } | TargetSpec::Uniform => {
                let (a, b) = self.beta_parameters().unwrap();
                let s = a + b;
                MomentSet {
                    mean: a / s,
                    variance: a * b / (s * s * (s + 1.0)),
                    skewness: 2.0 * (b - a) * (s + 1.0).sqrt() / ((s + 2.0) * (a * b).sqrt()),
                    excess_kurtosis: 6.0 * ((a - b).powi(2) * (s + 1.0) - a * b * (s + 2.0))
                        / (a * b * (s + 2.0) * (s + 3.0)),
                }
            }
        }
    }

    /// `n` draws with a ChaCha20 generator seeded from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match *self {
            TargetSpec::Gaussian { m, sigma } => (0..n)
                .map(|_| m + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            TargetSpec::GeneralizedNormal { alpha, beta, gamma } => {
                let shape = Gamma::new(1.0 / gamma, 1.0).expect("validated shape");
                (0..n)
                    .map(|_| {
                        let g: f64 = shape.sample(rng);
                        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        alpha + beta * (2.0 * g).powf(1.0 / gamma) * s
                    })
                    .collect()
            }
            TargetSpec::SkewGaussian { s, m, v } => {
                let delta = s / (1.0 + s * s).sqrt();
                let rest = (1.0 - delta * delta).sqrt();
                let sd = v.sqrt();
                (0..n)
                    .map(|_| {
                        let z1: f64 = rng.sample(StandardNormal);
                        let z2: f64 = rng.sample(StandardNormal);
                        m + sd * (delta * z1.abs() + rest * z2)
                    })
                    .collect()
            }
            TargetSpec::Beta { alpha, beta } => {
                let dist = BetaDist::new(alpha, beta).expect("validated beta parameters");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
            TargetSpec::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// The same family re-parameterized to the given mean and standard deviation,
    /// keeping the shape parameters (γ for GN, s for skew Gaussian).
    pub fn with_mean_sd(&self, mean: f64, sd: f64) -> Result<TargetSpec> {
        positive("sd", sd)?;
        finite("mean", mean)?;
        match *self {
            TargetSpec::Gaussian { .. } => Ok(TargetSpec::Gaussian { m: mean, sigma: sd }),
            TargetSpec::GeneralizedNormal { gamma: g, .. } => {
                let unit = TargetSpec::GeneralizedNormal { alpha: 0.0, beta: 1.0, gamma: g };
                let beta = sd / unit.moments().variance.sqrt();
                Ok(TargetSpec::GeneralizedNormal { alpha: mean, beta, gamma: g })
            }
            TargetSpec::SkewGaussian { s, .. } => {
                let delta = s / (1.0 + s * s).sqrt();
                let mu_z = delta * (2.0 / PI).sqrt();
                let v = sd * sd / (1.0 - mu_z * mu_z);
                Ok(TargetSpec::SkewGaussian { s, m: mean - v.sqrt() * mu_z, v })
            }
            TargetSpec::Beta { .. } | TargetSpec::Uniform => beta_from_moments(mean, sd * sd),
        }
    }
}

/// The beta distribution with the given mean and variance.
pub fn beta_from_moments(mean: f64, variance: f64) -> Result<TargetSpec> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::Infeasible(format!("beta mean {mean} is not in (0, 1)")));
    }
    if !(variance > 0.0 && variance < mean * (1.0 - mean)) {
        return Err(Error::Infeasible(format!(
            "variance {variance} must lie in (0, {}) for mean {mean}",
            mean * (1.0 - mean)
        )));
    }
    let nu = mean * (1.0 - mean) / variance - 1.0;
    Ok(TargetSpec::Beta { alpha: mean * nu, beta: (1.0 - mean) * nu })
}
