//! Divergence objectives over portfolio weights.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cem::Weights;
use crate::divergences::{
    self, default_fssd_locations, quantile_grid, wasserstein_to_grid, DivergenceConfig, DivergenceKind,
    Variant, DEFAULT_FSSD_LOCATIONS,
};
use crate::embeddings::EmbeddingPair;
use crate::error::{Error, Result};
use crate::gram;
use crate::kernels::KernelSpec;
use crate::targets::TargetSpec;

pub use crate::divergences::mean_sd;

/// How the kernel scale follows the candidate portfolio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Use the configured kernel as is.
    Fixed,
    /// Rescale the kernel to the sample standard deviation σ̂ of wᵀr.
    #[default]
    SampleSd,
}

/// The kernel rescaled to a sample with standard deviation `sd`: Gaussian
/// c = σ̂, Laplacian λ = 1/σ̂, Matérn σ = σ̂, exponential b = 1/(2σ̂²),
/// Gaussian-exponentiated a = 1/(2σ̂²).
pub fn rescale_kernel(kernel: &KernelSpec, sd: f64) -> Result<KernelSpec> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::DivergentParameter(format!("sample standard deviation {sd} cannot set a bandwidth")));
    }
    Ok(match *kernel {
        KernelSpec::Gaussian { .. } => KernelSpec::Gaussian { c: sd },
        KernelSpec::Laplacian { .. } => KernelSpec::Laplacian { lambda: 1.0 / sd },
        KernelSpec::Matern { sigma0, p, .. } => KernelSpec::Matern { sigma0, sigma: sd, p },
        KernelSpec::Exponential { .. } => KernelSpec::Exponential { b: 1.0 / (2.0 * sd * sd) },
        KernelSpec::GaussianExponentiated { b, .. } => KernelSpec::GaussianExponentiated { a: 1.0 / (2.0 * sd * sd), b },
    })
}

/// D(w) for a fixed return sample: the divergence between the empirical
/// distribution of {wᵀrᵢ} and the target. Target draws, FSSD locations and the
/// Wasserstein quantile grid are fixed at construction so every candidate is
/// scored against the same reference.
#[derive(Clone, Debug)]
pub struct PortfolioObjective {
    rows: Vec<Vec<f64>>,
    divergence: DivergenceConfig,
    bandwidth: Bandwidth,
    include_constant: bool,
    target_draws: Vec<f64>,
    grid: Vec<f64>,
}

impl PortfolioObjective {
    /// `rows` holds one return vector per observation. The constant target
    /// term of the semi-explicit MMD is dropped only when `divergence` asks for
    /// it.
    pub fn new(rows: Vec<Vec<f64>>, divergence: DivergenceConfig, bandwidth: Bandwidth, seed: u64) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if d < 2 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Domain("returns must be a rectangular matrix with at least two assets".into()));
        }
        let mut divergence = divergence;
        if divergence.kind == DivergenceKind::Fssd && divergence.fssd_locations.is_empty() {
            let ew = Weights::equal(d).apply(&rows);
            divergence.fssd_locations = default_fssd_locations(&ew, DEFAULT_FSSD_LOCATIONS, seed)?;
        }
        divergence.validate()?;
        let target_draws = if divergence.kind.is_two_sample() {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            divergence.target.sample_with(&mut rng, divergence.target_sample_size)
        } else {
            Vec::new()
        };
        let grid = if divergence.kind == DivergenceKind::Wasserstein {
            quantile_grid(&divergence.target, rows.len())?
        } else {
            Vec::new()
        };
        Ok(Self {
            include_constant: !divergence.drop_constant_term,
            rows,
            divergence,
            bandwidth,
            target_draws,
            grid,
        })
    }

    pub fn dimension(&self) -> usize {
        self.rows[0].len()
    }

    pub fn divergence(&self) -> &DivergenceConfig {
        &self.divergence
    }

    pub fn portfolio(&self, w: &Weights) -> Vec<f64> {
        w.apply(&self.rows)
    }

    /// The kernel used for a candidate with portfolio returns `xs`.
    pub fn kernel_for(&self, xs: &[f64]) -> Result<Option<KernelSpec>> {
        let Some(kernel) = self.divergence.kernel else {
            return Ok(None);
        };
        match self.bandwidth {
            Bandwidth::Fixed => Ok(Some(kernel)),
            Bandwidth::SampleSd => Ok(Some(rescale_kernel(&kernel, mean_sd(xs).1)?)),
        }
    }

    /// D(w).
    pub fn value(&self, w: &Weights) -> Result<f64> {
        let xs = self.portfolio(w);
        self.value_of_returns(&xs)
    }

    /// D evaluated on an already formed portfolio return series.
    pub fn value_of_returns(&self, xs: &[f64]) -> Result<f64> {
        let cfg = &self.divergence;
        let kernel = self.kernel_for(xs)?;
        let kernel_or_err = || kernel.ok_or_else(|| Error::Domain("estimator needs a kernel".into()));
        let variant = cfg.kind.variant();
        match cfg.kind {
            DivergenceKind::MmdTwoSampleU | DivergenceKind::MmdTwoSampleV => {
                let k = kernel_or_err()?;
                if self.include_constant {
                    divergences::mmd2_two_sample(&k, xs, &self.target_draws, variant)
                } else {
                    mmd2_two_sample_without_target_term(&k, xs, &self.target_draws, variant)
                }
            }
            DivergenceKind::MmdSemiExplicitU | DivergenceKind::MmdSemiExplicitV => {
                let pair = EmbeddingPair::new(cfg.target, kernel_or_err()?)?;
                divergences::mmd2_semi_explicit(&pair, xs, variant, self.include_constant)
            }
            DivergenceKind::KsdU | DivergenceKind::KsdV => {
                divergences::ksd2(&kernel_or_err()?, &cfg.target, xs, variant)
            }
            DivergenceKind::Fssd => {
                divergences::fssd2(&kernel_or_err()?, &cfg.target, xs, &cfg.fssd_locations)
            }
            DivergenceKind::Wasserstein => wasserstein_to_grid(xs, &self.grid, cfg.wad_p),
            DivergenceKind::KlGaussian => divergences::kl_gaussian_objective(xs, &cfg.target),
        }
    }

    /// L(w) = −D(w), the quantity the cross-entropy method maximizes.
    pub fn score(&self, w: &Weights) -> Result<f64> {
        self.value(w).map(|v| -v)
    }
}

/// Two-sample MMD² without the target-only Gram term.
pub fn mmd2_two_sample_without_target_term(
    kernel: &KernelSpec,
    xs: &[f64],
    ys: &[f64],
    variant: Variant,
) -> Result<f64> {
    if xs.len() < 2 || ys.is_empty() {
        return Err(Error::InsufficientSamples { needed: 2, got: xs.len().min(ys.len()) });
    }
    divergences::check_exponent(kernel, xs, ys)?;
    let n = xs.len() as f64;
    let off = gram::offdiag_sum(kernel, xs);
    let own = match variant {
        Variant::U => off / (n * (n - 1.0)),
        Variant::V => (off + gram::diag_sum(kernel, xs)) / (n * n),
    };
    Ok(own - 2.0 * gram::cross_sum(kernel, xs, ys) / (n * ys.len() as f64))
}

/// Replaces the target's location and scale by (mean, sd), keeping its shape.
pub fn retarget(target: &TargetSpec, mean: f64, sd: f64) -> Result<TargetSpec> {
    target.with_mean_sd(mean, sd)
}
