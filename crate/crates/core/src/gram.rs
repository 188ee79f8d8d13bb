//! Pairwise kernel sums Σᵢ Σⱼ k(xᵢ, yⱼ).
//!
//! Three exact strategies are used:
//!
//! * kernels of the form g(x)g(y)e^{κxy} (Gaussian, Gaussian-exponentiated,
//!   exponential) expand e^{κxy} = Σₖ (κxy)ᵏ/k!, which factorizes the double
//!   sum into Σₖ Sₖ(x)Sₖ(y) with Sₖ(x) = Σᵢ g(xᵢ)(√κ xᵢ)ᵏ/√k!; the series is
//!   truncated once its tail is below 10⁻¹⁷ of the leading term;
//! * Matérn and Laplacian kernels e^{−θd}·poly(d) are swept in sorted order
//!   carrying Σ e^{−θd}dⁿ, updated with the binomial theorem;
//! * everything else is summed directly.
//!
//! Direct sums reduce per-row partial sums in index order, so results do not
//! depend on the number of threads.

use rayon::prelude::*;

use crate::kernels::{KernelSpec, MaternPoly};

/// Largest κ·max|x|² for which the power series is used.
const SERIES_RADIUS: f64 = 300.0;
/// Below this many pairs direct summation is cheaper than any setup.
const DIRECT_PAIRS: usize = 4096;

/// Σ_{i≠j} k(xᵢ, xⱼ).
pub fn offdiag_sum(kernel: &KernelSpec, xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    if n * n > DIRECT_PAIRS {
        if let Some(plan) = SeriesPlan::new(kernel, xs, &[]) {
            return plan.per_pair().self_sum(xs) - diag_sum(kernel, xs);
        }
        if let Some(poly) = distance_poly(kernel) {
            return sorted_offdiag_sum(&poly, xs);
        }
    }
    offdiag_sum_direct(kernel, xs)
}

/// Σᵢ Σⱼ k(xᵢ, yⱼ).
pub fn cross_sum(kernel: &KernelSpec, xs: &[f64], ys: &[f64]) -> f64 {
    if xs.is_empty() || ys.is_empty() {
        return 0.0;
    }
    if xs.len() * ys.len() > DIRECT_PAIRS {
        if let Some(plan) = SeriesPlan::new(kernel, xs, ys) {
            return plan.per_pair().cross_sum(xs, ys);
        }
        if let Some(poly) = distance_poly(kernel) {
            return sorted_cross_sum(&poly, xs, ys);
        }
    }
    cross_sum_direct(kernel, xs, ys)
}

/// Σᵢ k(xᵢ, xᵢ).
pub fn diag_sum(kernel: &KernelSpec, xs: &[f64]) -> f64 {
    xs.iter().map(|&x| kernel.eval(x, x)).sum()
}

/// Reference O(N²) evaluation of Σ_{i≠j} k(xᵢ, xⱼ).
pub fn offdiag_sum_direct(kernel: &KernelSpec, xs: &[f64]) -> f64 {
    let rows: Vec<f64> = (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let xi = xs[i];
            xs[i + 1..].iter().map(|&xj| kernel.eval(xi, xj)).sum::<f64>()
        })
        .collect();
    2.0 * rows.iter().sum::<f64>()
}

/// Reference O(NM) evaluation of Σᵢ Σⱼ k(xᵢ, yⱼ).
pub fn cross_sum_direct(kernel: &KernelSpec, xs: &[f64], ys: &[f64]) -> f64 {
    let rows: Vec<f64> = xs
        .par_iter()
        .map(|&xi| ys.iter().map(|&yj| kernel.eval(xi, yj)).sum::<f64>())
        .collect();
    rows.iter().sum()
}

/// k(x, y) = e^{−a(x−c)²} e^{−a(y−c)²} e^{κ(x−c)(y−c)} after shifting by c.
#[derive(Clone, Debug)]
pub(crate) struct SeriesPlan {
    centre: f64,
    a: f64,
    root_kappa: f64,
    order: usize,
    radius: f64,
    shifted: bool,
}

impl SeriesPlan {
    /// A plan covering every point of `xs` and `ys`, or `None` when the kernel
    /// has no such form or the series would need too many terms.
    pub(crate) fn new(kernel: &KernelSpec, xs: &[f64], ys: &[f64]) -> Option<Self> {
        let (a, kappa, shift) = match *kernel {
            KernelSpec::Gaussian { c } => {
                let a = 1.0 / (2.0 * c * c);
                (a, 2.0 * a, true)
            }
            KernelSpec::GaussianExponentiated { a, b } if b == 0.0 && a > 0.0 => (a, 2.0 * a, true),
            KernelSpec::GaussianExponentiated { a, b } => (a, 2.0 * a + b, false),
            KernelSpec::Exponential { b } => (0.0, b, false),
            _ => return None,
        };
        let centre = if shift {
            let total: f64 = xs.iter().chain(ys).sum();
            total / (xs.len() + ys.len()) as f64
        } else {
            0.0
        };
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, &x| m.max((x - centre).abs()));
        let (mx, my) = (max_abs(xs), if ys.is_empty() { max_abs(xs) } else { max_abs(ys) });
        let radius = kappa * mx * my;
        if !radius.is_finite() || radius > SERIES_RADIUS {
            return None;
        }
        Some(Self {
            centre,
            a,
            root_kappa: kappa.sqrt(),
            order: series_order(radius),
            radius,
            shifted: shift,
        })
    }

    /// For plain Gaussian kernels each pair carries g(x)g(y) ≤ e^{−t} with
    /// t = κ|u||v|, so its truncation error is at most P(Poisson(t) > K) and
    /// a much shorter series suffices for unweighted sums.
    fn per_pair(mut self) -> Self {
        if self.shifted {
            self.order = self.order.min(poisson_order(self.radius));
        }
        self
    }

    pub(crate) fn order(&self) -> usize {
        self.order
    }

    /// Extra terms for sums whose per-point weights grow with |x − c|.
    pub(crate) fn widened(mut self, extra: usize) -> Self {
        self.order += extra;
        self
    }

    pub(crate) fn shifted(&self, x: f64) -> f64 {
        x - self.centre
    }

    /// Per-point leading weight g(x) and scaled coordinate √κ(x − c).
    pub(crate) fn features(&self, x: f64) -> (f64, f64) {
        let u = x - self.centre;
        ((-self.a * u * u).exp(), self.root_kappa * u)
    }

    /// Sₖ = Σᵢ wᵢ g(xᵢ) vᵢᵏ/√k! for k = 0..=order.
    pub(crate) fn moments(&self, xs: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
        const LANES: usize = 8;
        let scale = inverse_sqrt_factorial_steps(self.order);
        let mut s = vec![0.0; self.order + 1];
        // eight points advance together so the multiplications pipeline
        for start in (0..xs.len()).step_by(LANES) {
            let mut t = [0.0; LANES];
            let mut v = [0.0; LANES];
            for j in 0..LANES.min(xs.len() - start) {
                let i = start + j;
                let (g, vi) = self.features(xs[i]);
                t[j] = g * weights.map_or(1.0, |w| w[i]);
                v[j] = vi;
            }
            s[0] += t.iter().sum::<f64>();
            for (k, sk) in s.iter_mut().enumerate().skip(1) {
                for j in 0..LANES {
                    t[j] *= v[j] * scale[k];
                }
                *sk += t.iter().sum::<f64>();
            }
        }
        s
    }

    pub(crate) fn self_sum(&self, xs: &[f64]) -> f64 {
        self.moments(xs, None).iter().map(|s| s * s).sum()
    }

    pub(crate) fn cross_sum(&self, xs: &[f64], ys: &[f64]) -> f64 {
        let sx = self.moments(xs, None);
        let sy = self.moments(ys, None);
        sx.iter().zip(&sy).map(|(a, b)| a * b).sum()
    }
}

/// 1/√k for k ≥ 1, so that multiplying k steps gives 1/√k!.
fn inverse_sqrt_factorial_steps(order: usize) -> Vec<f64> {
    (0..=order).map(|k| if k == 0 { 1.0 } else { 1.0 / (k as f64).sqrt() }).collect()
}

/// Smallest K with Σ_{k>K} zᵏ/k! ≤ 10⁻¹⁷.
fn series_order(z: f64) -> usize {
    let mut term = 1.0;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= z / k as f64;
        let next = k as f64 + 1.0;
        if next > z {
            let tail = term * z / next / (1.0 - z / (next + 1.0)).max(1e-300);
            if tail <= 1e-17 {
                return k;
            }
        }
        if k > 4000 {
            return k;
        }
    }
}

/// Smallest K with P(Poisson(z) > K) ≤ 10⁻¹⁷.
fn poisson_order(z: f64) -> usize {
    let mut term = (-z).exp();
    let mut cdf = term;
    let mut k = 0usize;
    while k < 4000 {
        k += 1;
        term *= z / k as f64;
        cdf += term;
        // once past the mode the tail is below term·z/(k+1−z)
        if k as f64 + 1.0 > z && term * z / (k as f64 + 1.0 - z) <= 1e-17 {
            return k;
        }
        if cdf >= 1.0 && term < 1e-300 {
            return k;
        }
    }
    k
}

fn distance_poly(kernel: &KernelSpec) -> Option<MaternPoly> {
    match *kernel {
        KernelSpec::Matern { sigma0, sigma, p } => Some(MaternPoly::new(sigma0, sigma, p)),
        KernelSpec::Laplacian { lambda } => Some(MaternPoly {
            theta: lambda,
            coeffs: vec![1.0],
        }),
        _ => None,
    }
}

/// Running sums Sₙ = Σ e^{−θd}dⁿ over the points already passed, with d the
/// distance to the current sweep position.
struct DistanceState {
    s: Vec<f64>,
    scratch: Vec<f64>,
}

impl DistanceState {
    fn new(p: usize) -> Self {
        Self {
            s: vec![0.0; p + 1],
            scratch: vec![0.0; p + 1],
        }
    }

    /// Moves the sweep position right by δ ≥ 0:
    /// Sₙ ← e^{−θδ} Σ_{m≤n} C(n,m) δ^{n−m} Sₘ.
    fn advance(&mut self, delta: f64, theta: f64, binom: &[Vec<f64>]) {
        if delta == 0.0 {
            return;
        }
        let decay = (-theta * delta).exp();
        let p = self.s.len() - 1;
        let mut powers = vec![1.0; p + 1];
        for i in 1..=p {
            powers[i] = powers[i - 1] * delta;
        }
        for n in 0..=p {
            let mut acc = 0.0;
            for m in 0..=n {
                acc += binom[n][m] * powers[n - m] * self.s[m];
            }
            self.scratch[n] = decay * acc;
        }
        std::mem::swap(&mut self.s, &mut self.scratch);
    }

    fn value(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.s).map(|(c, s)| c * s).sum()
    }

    fn push(&mut self) {
        self.s[0] += 1.0;
    }
}

fn binomials(p: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0]];
    for n in 1..=p {
        let prev = &rows[n - 1];
        let mut row = vec![1.0; n + 1];
        for m in 1..n {
            row[m] = prev[m - 1] + prev[m];
        }
        rows.push(row);
    }
    rows
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn sorted_offdiag_sum(poly: &MaternPoly, xs: &[f64]) -> f64 {
    let xs = sorted_copy(xs);
    let binom = binomials(poly.p());
    let mut state = DistanceState::new(poly.p());
    let mut total = 0.0;
    for (j, &x) in xs.iter().enumerate() {
        if j > 0 {
            state.advance(x - xs[j - 1], poly.theta, &binom);
        }
        total += state.value(&poly.coeffs);
        state.push();
    }
    2.0 * total
}

fn sorted_cross_sum(poly: &MaternPoly, xs: &[f64], ys: &[f64]) -> f64 {
    // x before y on ties, so each tied pair is counted once (by the y point)
    let mut merged: Vec<(f64, bool)> = xs
        .iter()
        .map(|&x| (x, false))
        .chain(ys.iter().map(|&y| (y, true)))
        .collect();
    merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let binom = binomials(poly.p());
    let mut from_x = DistanceState::new(poly.p());
    let mut from_y = DistanceState::new(poly.p());
    let mut total = 0.0;
    let mut last = merged[0].0;
    for &(value, is_y) in &merged {
        let delta = value - last;
        from_x.advance(delta, poly.theta, &binom);
        from_y.advance(delta, poly.theta, &binom);
        last = value;
        if is_y {
            total += from_x.value(&poly.coeffs);
            from_y.push();
        } else {
            total += from_y.value(&poly.coeffs);
            from_x.push();
        }
    }
    total
}
