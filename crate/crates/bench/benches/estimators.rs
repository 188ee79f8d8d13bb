use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mindiv_bench::{beta_target, portfolio_sample, return_rows};
use mindiv_core::cem::cem_optimize;
use mindiv_core::divergences::{ksd2, mmd2_semi_explicit, wasserstein_p};
use mindiv_core::experiments::WELL_SPECIFIED;
use mindiv_core::gram::{offdiag_sum, offdiag_sum_direct};
use mindiv_core::{
    Bandwidth, CemConfig, DivergenceConfig, DivergenceKind, EmbeddingPair, KernelSpec, PortfolioObjective, Variant,
};

fn gram_sums(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    for n in [1000, 5000] {
        let xs = portfolio_sample(n, 1);
        let sd = 0.12;
        for kernel in [KernelSpec::Gaussian { c: sd }, KernelSpec::Laplacian { lambda: 1.0 / sd }] {
            group.bench_with_input(BenchmarkId::new(kernel.name(), n), &xs, |b, xs| {
                b.iter(|| offdiag_sum(&kernel, black_box(xs)))
            });
        }
    }
    let xs = portfolio_sample(1000, 1);
    group.bench_function("direct/1000", |b| {
        b.iter(|| offdiag_sum_direct(&KernelSpec::Gaussian { c: 0.12 }, black_box(&xs)))
    });
    group.finish();
}

fn embeddings(c: &mut Criterion) {
    let mut group = c.benchmark_group("embedding");
    let grid: Vec<f64> = (0..101).map(|i| -1.0 + 3.0 * i as f64 / 100.0).collect();
    let cases = [
        ("beta-laplacian", EmbeddingPair::new(beta_target(), KernelSpec::Laplacian { lambda: 5.0 }).unwrap()),
        (
            "beta-matern2",
            EmbeddingPair::new(beta_target(), KernelSpec::Matern { sigma0: 1.0, sigma: 0.3, p: 2 }).unwrap(),
        ),
        (
            "gaussian-gaussian",
            EmbeddingPair::new(WELL_SPECIFIED.gaussian_target(), KernelSpec::Gaussian { c: 0.14 }).unwrap(),
        ),
    ];
    for (name, pair) in &cases {
        group.bench_function(*name, |b| b.iter(|| pair.mean_embedding_many(black_box(&grid)).unwrap()));
    }
    let pair = &cases[0].1;
    group.bench_function("beta-laplacian/constant", |b| b.iter(|| pair.double_expectation(1e-10).unwrap()));
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimator");
    let xs = portfolio_sample(5000, 2);
    let target = WELL_SPECIFIED.gaussian_target();
    let kernel = KernelSpec::Gaussian { c: 0.14 };
    let pair = EmbeddingPair::new(target, kernel).unwrap();
    group.bench_function("semi-explicit-u/5000", |b| {
        b.iter(|| mmd2_semi_explicit(&pair, black_box(&xs), Variant::U, true).unwrap())
    });
    group.bench_function("ksd-u/5000", |b| b.iter(|| ksd2(&kernel, &target, black_box(&xs), Variant::U).unwrap()));
    group.bench_function("wasserstein-1/5000", |b| b.iter(|| wasserstein_p(black_box(&xs), &target, 1.0).unwrap()));
    group.finish();
}

fn optimizer(c: &mut Criterion) {
    let mut group = c.benchmark_group("cem");
    group.sample_size(10);
    let rows = return_rows(1000, 3);
    let divergence = DivergenceConfig::new(
        DivergenceKind::MmdSemiExplicitU,
        Some(KernelSpec::Gaussian { c: 1.0 }),
        WELL_SPECIFIED.gaussian_target(),
    );
    let objective = PortfolioObjective::new(rows, divergence, Bandwidth::SampleSd, 0).unwrap();
    let cfg = CemConfig { iterations: 20, ..CemConfig::default() };
    group.bench_function("semi-explicit/1000x2", |b| b.iter(|| cem_optimize(|w| objective.score(w), 2, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, gram_sums, embeddings, estimators, optimizer);
criterion_main!(benches);
