//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's numerical code: kernels, densities and
//! quadrature are written out again from their definitions.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use mindiv_core::{KernelSpec, TargetSpec};

/// Nodes and weights of the 20-point Gauss–Legendre rule on [−1, 1].
fn legendre20() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 20;
        let mut rule = Vec::with_capacity(n);
        for i in 1..=n {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    legendre20().iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Adaptive bisection with the 20-point Gauss–Legendre rule.
pub fn quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn go(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (panel(f, a, m), panel(f, m, b));
        let diff = (l + r - whole).abs();
        if diff <= tol || diff <= 1e-14 * (l.abs() + r.abs()) || depth > 30 {
            return l + r;
        }
        go(f, a, m, l, 0.5 * tol, depth + 1) + go(f, m, b, r, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    go(f, a, b, panel(f, a, b), tol, 0)
}

/// ∫ over consecutive breakpoints.
pub fn quad_pts(f: &dyn Fn(f64) -> f64, pts: &[f64], tol: f64) -> f64 {
    let mut pts = pts.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| quad(f, w[0], w[1], tol / pts.len() as f64)).sum()
}

/// ∫_lo^hi f(y) y^a (1−y)^b dy for a, b > −1 and 0 ≤ lo ≤ hi ≤ 1. The pieces
/// left of ½ use y = u^{1/(a+1)}, the pieces right of ½ use 1 − y = v^{1/(b+1)},
/// which turns the endpoint singularities into smooth integrands. `breaks`
/// marks kinks of f.
pub fn beta_weighted(f: &dyn Fn(f64) -> f64, a: f64, b: f64, lo: f64, hi: f64, breaks: &[f64], tol: f64) -> f64 {
    let (pa, pb) = (a + 1.0, b + 1.0);
    let mut total = 0.0;
    let left_hi = hi.min(0.5);
    if lo < left_hi {
        let mut pts = vec![lo.powf(pa), left_hi.powf(pa)];
        pts.extend(breaks.iter().filter(|&&t| t > lo && t < left_hi).map(|&t| t.powf(pa)));
        let g = |u: f64| {
            let y = u.powf(1.0 / pa);
            f(y) * (1.0 - y).powf(b)
        };
        total += quad_pts(&g, &pts, tol) / pa;
    }
    let right_lo = lo.max(0.5);
    if right_lo < hi {
        let mut pts = vec![(1.0 - hi).powf(pb), (1.0 - right_lo).powf(pb)];
        pts.extend(breaks.iter().filter(|&&t| t > right_lo && t < hi).map(|&t| (1.0 - t).powf(pb)));
        let g = |v: f64| {
            let s = v.powf(1.0 / pb);
            f(1.0 - s) * (1.0 - s).powf(a)
        };
        total += quad_pts(&g, &pts, tol) / pb;
    }
    total
}

pub fn kernel(spec: &KernelSpec) -> Box<dyn Fn(f64, f64) -> f64 + Sync> {
    match *spec {
        KernelSpec::GaussianExponentiated { a, b } => Box::new(move |x, y| (-a * (x - y).powi(2) + b * x * y).exp()),
        KernelSpec::Gaussian { c } => Box::new(move |x, y| (-(x - y).powi(2) / (2.0 * c * c)).exp()),
        KernelSpec::Laplacian { lambda } => Box::new(move |x, y| (-lambda * (x - y).abs()).exp()),
        KernelSpec::Exponential { b } => Box::new(move |x, y| (b * x * y).exp()),
        KernelSpec::Matern { sigma0, sigma, p } => Box::new(move |x, y| matern(sigma0, sigma, p, (x - y).abs())),
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// σ₀² e^{−√(2p+1)d/σ} p!/(2p)! Σᵢ (p+i)!/(i!(p−i)!) (2√(2p+1)d/σ)^{p−i}
pub fn matern(sigma0: f64, sigma: f64, p: u32, d: f64) -> f64 {
    let t = (2.0 * p as f64 + 1.0).sqrt() * d / sigma;
    let s: f64 = (0..=p)
        .map(|i| factorial(p + i) / (factorial(i) * factorial(p - i)) * (2.0 * t).powi((p - i) as i32))
        .sum();
    sigma0 * sigma0 * (-t).exp() * factorial(p) / factorial(2 * p) * s
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// E_{Y∼Q} g(Y), with `breaks` marking kinks of g.
pub fn expect(target: &TargetSpec, g: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> f64 {
    match *target {
        TargetSpec::Gaussian { m, sigma } => {
            let f = |y: f64| g(y) * normal_pdf((y - m) / sigma) / sigma;
            let mut pts = vec![m - 40.0 * sigma, m, m + 40.0 * sigma];
            pts.extend(breaks.iter().filter(|t| (**t - m).abs() < 40.0 * sigma));
            quad_pts(&f, &pts, tol)
        }
        TargetSpec::SkewGaussian { s, m, v } => {
            let sd = v.sqrt();
            let f = |y: f64| {
                let z = (y - m) / sd;
                g(y) * 2.0 / sd * normal_pdf(z) * normal_cdf(s * z)
            };
            let mut pts = vec![m - 40.0 * sd, m, m + 40.0 * sd];
            pts.extend(breaks.iter().filter(|t| (**t - m).abs() < 40.0 * sd));
            quad_pts(&f, &pts, tol)
        }
        TargetSpec::Beta { alpha, beta } => {
            // self-normalized, so no beta function is needed
            let mass = beta_weighted(&|_| 1.0, alpha - 1.0, beta - 1.0, 0.0, 1.0, &[], tol * 1e-3);
            beta_weighted(g, alpha - 1.0, beta - 1.0, 0.0, 1.0, breaks, tol) / mass
        }
        TargetSpec::Uniform => {
            let mut pts = vec![0.0, 1.0];
            pts.extend(breaks.iter().filter(|t| **t > 0.0 && **t < 1.0));
            quad_pts(g, &pts, tol)
        }
        TargetSpec::GeneralizedNormal { .. } => unimplemented!("no embedding oracle for this target"),
    }
}

/// μ(x) = E_{Y∼Q} k(x, Y) by quadrature.
pub fn mean_embedding(target: &TargetSpec, spec: &KernelSpec, x: f64, tol: f64) -> f64 {
    let k = kernel(spec);
    expect(target, &|y| k(x, y), &[x], tol)
}

/// Mean and sample standard deviation (divisor n − 1).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Σ_{i≠j} k(xᵢ, xⱼ), plainly.
pub fn offdiag(k: &dyn Fn(f64, f64) -> f64, xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            if i != j {
                s += k(x, y);
            }
        }
    }
    s
}

/// All permutations of 0..n.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Representative (target, kernel) pairs covering every closed-form row.
pub fn embedding_pairs() -> Vec<(TargetSpec, KernelSpec)> {
    vec![
        (TargetSpec::Gaussian { m: 0.1, sigma: 0.8 }, KernelSpec::GaussianExponentiated { a: 0.5, b: 0.2 }),
        (TargetSpec::Gaussian { m: -0.3, sigma: 1.2 }, KernelSpec::Gaussian { c: 0.5 }),
        (TargetSpec::Gaussian { m: 0.0, sigma: 1.0 }, KernelSpec::Exponential { b: 0.3 }),
        (TargetSpec::SkewGaussian { s: 3.0, m: 0.2, v: 0.5 }, KernelSpec::Gaussian { c: 0.6 }),
        (TargetSpec::SkewGaussian { s: -1.5, m: 0.0, v: 2.0 }, KernelSpec::Gaussian { c: 1.3 }),
        (TargetSpec::Beta { alpha: 2.0, beta: 3.0 }, KernelSpec::Matern { sigma0: 1.0, sigma: 0.5, p: 1 }),
        (TargetSpec::Beta { alpha: 0.5, beta: 1.5 }, KernelSpec::Matern { sigma0: 1.3, sigma: 0.3, p: 2 }),
        (TargetSpec::Beta { alpha: 2.0, beta: 3.0 }, KernelSpec::Laplacian { lambda: 1.0 }),
        (TargetSpec::Beta { alpha: 0.5, beta: 0.7 }, KernelSpec::Laplacian { lambda: 5.0 }),
        (
            TargetSpec::Beta { alpha: 0.027742040816326540, beta: 0.7428702040816327 },
            KernelSpec::Laplacian { lambda: 3.571428571428571 },
        ),
        (TargetSpec::Uniform, KernelSpec::Laplacian { lambda: 2.0 }),
    ]
}

/// 101 evaluation points: ±5 standard deviations around the mean, or [−1, 2]
/// for targets on the unit interval.
pub fn embedding_grid(target: &TargetSpec) -> Vec<f64> {
    let (lo, hi) = match *target {
        TargetSpec::Beta { .. } | TargetSpec::Uniform => (-1.0, 2.0),
        _ => {
            let mom = target.moments();
            let sd = mom.variance.sqrt();
            (mom.mean - 5.0 * sd, mom.mean + 5.0 * sd)
        }
    };
    (0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect()
}
