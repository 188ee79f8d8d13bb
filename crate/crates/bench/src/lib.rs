//! Fixtures shared by the benchmarks.

use mindiv_core::experiments::WELL_SPECIFIED;
use mindiv_core::rng::cell_rng;
use mindiv_core::{TargetSpec, Weights};

/// Returns of the well-specified two-asset portfolio at w₁ = 0.3.
pub fn portfolio_sample(n: usize, seed: u64) -> Vec<f64> {
    Weights::from_free(&[0.3]).apply(&return_rows(n, seed))
}

pub fn return_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = cell_rng(seed, &[0]);
    WELL_SPECIFIED.gaussian_returns(&mut rng, n)
}

pub fn beta_target() -> TargetSpec {
    TargetSpec::Beta { alpha: 2.0, beta: 5.0 }
}
