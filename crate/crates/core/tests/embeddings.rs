mod common;

use mindiv_core::embeddings::{choose_truncation, e1, e2, mmd2_gaussian_exponential, EmbeddingPair};
use mindiv_core::{Error, KernelSpec, TargetSpec};
use proptest::prelude::*;

#[test]
fn every_pair_matches_quadrature_on_its_grid() {
    for (target, kernel) in common::embedding_pairs() {
        let pair = EmbeddingPair::new(target, kernel).unwrap();
        let mut worst: f64 = 0.0;
        for x in common::embedding_grid(&target) {
            let analytic = pair.mean_embedding(x).unwrap();
            let oracle = common::mean_embedding(&target, &kernel, x, 1e-11);
            worst = worst.max((analytic - oracle).abs());
        }
        assert!(worst <= 1e-7, "{target:?} × {kernel:?}: max error {worst:e}");
    }
}

#[test]
fn documented_embedding_values() {
    let gg = EmbeddingPair::new(TargetSpec::Gaussian { m: 0.0, sigma: 1.0 }, KernelSpec::Gaussian { c: 1.0 }).unwrap();
    assert!((gg.mean_embedding(0.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);

    let ul = EmbeddingPair::new(TargetSpec::Beta { alpha: 1.0, beta: 1.0 }, KernelSpec::Laplacian { lambda: 1.0 }).unwrap();
    let exact = 2.0 * (1.0 - (-0.5f64).exp());
    assert!((ul.mean_embedding(0.5).unwrap() - exact).abs() < 1e-9);
    assert!((exact - 0.7869387).abs() < 1e-7);
}

#[test]
fn skew_gaussian_with_zero_skew_is_gaussian() {
    let kernel = KernelSpec::Gaussian { c: 1.0 };
    let skew = EmbeddingPair::new(TargetSpec::SkewGaussian { s: 0.0, m: 0.0, v: 1.0 }, kernel).unwrap();
    let plain = EmbeddingPair::new(TargetSpec::Gaussian { m: 0.0, sigma: 1.0 }, kernel).unwrap();
    for i in 0..=40 {
        let x = -5.0 + 0.25 * i as f64;
        assert!((skew.mean_embedding(x).unwrap() - plain.mean_embedding(x).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn kernel_reductions_agree() {
    let target = TargetSpec::Gaussian { m: 0.4, sigma: 0.7 };
    let c: f64 = 0.9;
    let ge = EmbeddingPair::new(target, KernelSpec::GaussianExponentiated { a: 1.0 / (2.0 * c * c), b: 0.0 }).unwrap();
    let g = EmbeddingPair::new(target, KernelSpec::Gaussian { c }).unwrap();

    let beta = TargetSpec::Beta { alpha: 2.0, beta: 3.0 };
    let lambda = 2.5;
    let matern = EmbeddingPair::new(beta, KernelSpec::Matern { sigma0: 1.0, sigma: 1.0 / lambda, p: 0 }).unwrap();
    let laplace = EmbeddingPair::new(beta, KernelSpec::Laplacian { lambda }).unwrap();

    for i in 0..=100 {
        let x = -3.0 + 0.06 * i as f64;
        assert!((ge.mean_embedding(x).unwrap() - g.mean_embedding(x).unwrap()).abs() <= 1e-12);
        let z = -1.0 + 0.03 * i as f64;
        assert!((matern.mean_embedding(z).unwrap() - laplace.mean_embedding(z).unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn double_expectations_against_closed_forms() {
    for m in [-2.0, 0.0, 0.7, 3.0] {
        let pair = EmbeddingPair::new(TargetSpec::Gaussian { m, sigma: 1.0 }, KernelSpec::Gaussian { c: 1.0 }).unwrap();
        assert!((pair.double_expectation(1e-12).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }
    let exp = EmbeddingPair::new(TargetSpec::Gaussian { m: 0.0, sigma: 1.0 }, KernelSpec::Exponential { b: 0.3 }).unwrap();
    let value = exp.double_expectation(1e-12).unwrap();
    assert!((value - 1.0 / 0.91f64.sqrt()).abs() < 1e-12);
    assert!((value - 1.0482848).abs() < 1e-7);
}

#[test]
fn double_expectations_against_nested_quadrature() {
    for (target, kernel) in common::embedding_pairs() {
        let pair = EmbeddingPair::new(target, kernel).unwrap();
        let k = common::kernel(&kernel);
        let inner = |x: f64| common::expect(&target, &|y| k(x, y), &[x], 1e-12);
        let oracle = common::expect(&target, &inner, &[], 1e-10);
        let analytic = pair.double_expectation(1e-10).unwrap();
        assert!((analytic - oracle).abs() < 1e-8, "{target:?} × {kernel:?}: {analytic} vs {oracle}");
    }
}

#[test]
fn heavy_mass_at_zero_beta_constant_term() {
    // reference from an independent 30-digit computation with the same substitution
    let target = TargetSpec::Beta { alpha: 0.027742040816326540, beta: 0.7428702040816327 };
    let pair = EmbeddingPair::new(target, KernelSpec::Laplacian { lambda: 3.571428571428571 }).unwrap();
    assert!((pair.double_expectation(1e-12).unwrap() - 0.885789422647823).abs() < 1e-10);
    assert!((pair.mean_embedding(0.3).unwrap() - 0.358591331089522).abs() < 1e-11);
}

#[test]
fn exponential_kernel_divergence_guards() {
    let target = TargetSpec::Gaussian { m: 0.0, sigma: 1.0 };
    let at_edge = EmbeddingPair::new(target, KernelSpec::Exponential { b: 1.0 });
    assert!(matches!(at_edge.and_then(|p| p.mean_embedding(0.0)), Err(Error::DivergentParameter(_))));
    let wide = EmbeddingPair::new(target, KernelSpec::Exponential { b: 0.6 }).unwrap();
    assert!(wide.mean_embedding(1.0).is_ok());
    assert!(matches!(mmd2_gaussian_exponential(0.0, 1.0, 1.0, 0.6), Err(Error::DivergentParameter(_))));
}

#[test]
fn unsupported_pairs_are_refused() {
    let refused = [
        (TargetSpec::Beta { alpha: 2.0, beta: 2.0 }, KernelSpec::Gaussian { c: 1.0 }),
        (TargetSpec::Gaussian { m: 0.0, sigma: 1.0 }, KernelSpec::Laplacian { lambda: 1.0 }),
        (TargetSpec::GeneralizedNormal { alpha: 0.0, beta: 1.0, gamma: 1.0 }, KernelSpec::Gaussian { c: 1.0 }),
    ];
    for (target, kernel) in refused {
        assert!(matches!(EmbeddingPair::new(target, kernel), Err(Error::UnsupportedPair { .. })));
    }
}

/// The 27-point (λ, z, a = b) grid at K = ⌈λ⌉.
fn truncation_grid() -> Vec<(f64, f64, f64)> {
    let mut grid = Vec::new();
    for lambda in [1.0, 5.0, 25.0] {
        for z in [0.25, 0.5, 1.0] {
            for ab in [-0.5, 0.0, 2.0] {
                grid.push((lambda, z, ab));
            }
        }
    }
    grid
}

fn e1_oracle(lambda: f64, z: f64, a: f64, b: f64) -> f64 {
    common::beta_weighted(&|y| (lambda * y).exp(), a, b, 0.0, z, &[], 1e-13)
}

fn e2_oracle(lambda: f64, z: f64, a: f64, b: f64) -> f64 {
    common::beta_weighted(&|y| (-lambda * y).exp(), a, b, z, 1.0, &[], 1e-13)
}

#[test]
fn truncation_bounds_hold_on_the_grid() {
    for (lambda, z, ab) in truncation_grid() {
        let k = (lambda as f64).ceil() as usize;
        let s1 = e1(lambda, z, ab, ab, k).unwrap();
        let s2 = e2(lambda, z, ab, ab, k).unwrap();
        let err1 = (s1.value - e1_oracle(lambda, z, ab, ab)).abs();
        let err2 = (s2.value - e2_oracle(lambda, z, ab, ab)).abs();
        assert!(err1 <= s1.bound, "E1 λ={lambda} z={z} a=b={ab}: {err1:e} > {:e}", s1.bound);
        assert!(err2 <= s2.bound, "E2 λ={lambda} z={z} a=b={ab}: {err2:e} > {:e}", s2.bound);
    }
}

#[test]
fn documented_series_values() {
    let trivial = e1(0.0, 1.0, 0.0, 0.0, 0).unwrap();
    assert!((trivial.value - 1.0).abs() <= trivial.bound.max(1e-14));
    assert_eq!(trivial.truncation_bound, 0.0);

    let s = e1(1.0, 1.0, 0.0, 0.0, 20).unwrap();
    assert!((s.value - (std::f64::consts::E - 1.0)).abs() <= s.bound.max(1e-15));

    let s = e2(2.0, 0.5, 0.5, 0.5, 30).unwrap();
    assert!((s.value - e2_oracle(2.0, 0.5, 0.5, 0.5)).abs() < 1e-8);
}

#[test]
fn chosen_order_meets_tolerance() {
    assert!(choose_truncation(25.0, 0.0, 0.0, 0.5, 1e-8).unwrap() >= 25);
    let k = choose_truncation(5.0, 0.5, 1.5, 0.4, 1e-12).unwrap();
    let s1 = e1(5.0, 0.4, 0.5, 1.5, k).unwrap();
    let s2 = e2(5.0, 0.4, 0.5, 1.5, k).unwrap();
    assert!((s1.value - e1_oracle(5.0, 0.4, 0.5, 1.5)).abs() <= 1e-12 * s1.value.max(1.0));
    assert!((s2.value - e2_oracle(5.0, 0.4, 0.5, 1.5)).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn series_error_stays_within_bound(
        lambda in 0.0f64..30.0,
        z in 0.0f64..=1.0,
        a in -0.9f64..3.0,
        b in -0.9f64..3.0,
        k in 0usize..60,
    ) {
        let s1 = e1(lambda, z, a, b, k).unwrap();
        let s2 = e2(lambda, z, a, b, k).unwrap();
        let o1 = e1_oracle(lambda, z, a, b);
        let o2 = e2_oracle(lambda, z, a, b);
        // the oracle itself is good to about 1e-12 relative
        prop_assert!((s1.value - o1).abs() <= s1.bound + 1e-11 * o1.abs().max(1.0));
        prop_assert!((s2.value - o2).abs() <= s2.bound + 1e-11 * o2.abs().max(1.0));
    }

    #[test]
    fn bounded_kernel_embeddings_lie_in_unit_interval(
        alpha in 0.05f64..6.0,
        beta in 0.05f64..6.0,
        lambda in 0.1f64..20.0,
        x in -1.0f64..2.0,
    ) {
        let pair = EmbeddingPair::new(TargetSpec::Beta { alpha, beta }, KernelSpec::Laplacian { lambda }).unwrap();
        let mu = pair.mean_embedding(x).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&mu), "μ({x}) = {mu}");
    }

    #[test]
    fn beta_reflection_symmetry(
        alpha in 0.1f64..5.0,
        beta in 0.1f64..5.0,
        lambda in 0.1f64..10.0,
        x in -0.5f64..1.5,
    ) {
        let kernel = KernelSpec::Laplacian { lambda };
        let p = EmbeddingPair::new(TargetSpec::Beta { alpha, beta }, kernel).unwrap();
        let q = EmbeddingPair::new(TargetSpec::Beta { alpha: beta, beta: alpha }, kernel).unwrap();
        prop_assert!((p.mean_embedding(x).unwrap() - q.mean_embedding(1.0 - x).unwrap()).abs() < 1e-9);
    }
}
