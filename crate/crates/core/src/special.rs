//! Special functions and quadrature shared by the embedding and target code.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::erf;

pub use statrs::function::beta::ln_beta;
pub use statrs::function::gamma::{digamma, gamma, ln_gamma};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal quantile, refined by Newton steps on the distribution function.
pub fn norm_quantile(u: f64) -> f64 {
    let mut z = -SQRT_2 * erf::erfc_inv(2.0 * u);
    for _ in 0..2 {
        let d = norm_pdf(z);
        if !(d > 0.0) || !z.is_finite() {
            break;
        }
        // work on the smaller tail for relative accuracy
        let step = if z < 0.0 {
            (norm_cdf(z) - u) / d
        } else {
            ((1.0 - u) - norm_cdf(-z)) / d
        };
        z -= step;
    }
    z
}

/// φ(z)/Φ(z), stable far into the lower tail.
pub fn inverse_mills(z: f64) -> f64 {
    if z > -30.0 {
        return norm_pdf(z) / norm_cdf(z);
    }
    // asymptotic expansion of Φ(z)/φ(z) for z → −∞
    let r = 1.0 / (z * z);
    let tail = 1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r;
    -z / tail
}

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..20_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// ∫₀ˣ y^{a−1}(1−y)^{b−1} dy and ∫ₓ¹ y^{a−1}(1−y)^{b−1} dy, both unregularized.
///
/// Each side is evaluated with the continued fraction on whichever side of
/// (a+1)/(a+b+2) converges quickly; the other is its complement in B(a, b).
pub fn inc_beta_pair(a: f64, b: f64, x: f64) -> (f64, f64) {
    inc_beta_pair_split(a, b, x, 1.0 - x)
}

/// As `inc_beta_pair` with the complement 1 − x supplied separately, for
/// arguments so close to 1 that 1 − x would lose its digits.
pub fn inc_beta_pair_split(a: f64, b: f64, x: f64, xc: f64) -> (f64, f64) {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return (0.0, ln_beta(a, b).exp());
    }
    if xc <= 0.0 {
        return (ln_beta(a, b).exp(), 0.0);
    }
    let full = ln_beta(a, b).exp();
    let front = (a * x.ln() + b * xc.ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = front * beta_continued_fraction(a, b, x) / a;
        (lower, (full - lower).max(0.0))
    } else {
        let upper = front * beta_continued_fraction(b, a, xc) / b;
        ((full - upper).max(0.0), upper)
    }
}

/// Lower unregularized incomplete beta B(a, b; x).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    inc_beta_pair(a, b, x).0
}

/// Upper unregularized incomplete beta ∫ₓ¹ y^{a−1}(1−y)^{b−1} dy.
pub fn inc_beta_upper(a: f64, b: f64, x: f64) -> f64 {
    inc_beta_pair(a, b, x).1
}

/// Regularized incomplete beta I_x(a, b).
pub fn inc_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let lnb = ln_beta(a, b);
    let front = (a * x.ln() + b * (-x).ln_1p() - lnb).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Inverse of the regularized incomplete beta in x, polished by safeguarded Newton steps.
pub fn inv_inc_beta_reg(a: f64, b: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let start = statrs::function::beta::inv_beta_reg(a, b, u).clamp(0.0, 1.0);
    let lnb = ln_beta(a, b);
    let density = |x: f64| ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - lnb).exp();
    solve_monotone(|x| inc_beta_reg(a, b, x) - u, density, 0.0, 1.0, start, 1e-15)
}

/// Root of an increasing function `f` with derivative `df` inside `[lo, hi]`,
/// where `f(lo) ≤ 0 ≤ f(hi)`. Newton steps are kept inside the bracket and
/// replaced by bisection whenever they leave it.
pub fn solve_monotone(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    xtol: f64,
) -> f64 {
    let mut x = if start > lo && start < hi {
        start
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..400 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 && d.is_finite() {
            x - fx / d
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= xtol * (1.0 + x.abs()) || hi - lo <= xtol * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of a smooth integrand on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        let (value, err) = whole;
        if err <= tol || depth >= 48 || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
            return value;
        }
        let m = 0.5 * (a + b);
        let left = kronrod15(f, a, m);
        let right = kronrod15(f, m, b);
        recurse(f, a, m, 0.5 * tol, left, depth + 1) + recurse(f, m, b, 0.5 * tol, right, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    let whole = kronrod15(&f, a, b);
    recurse(&f, a, b, tol, whole, 0)
}

/// Tanh–sinh quadrature on `[a, b]`; tolerates integrable endpoint singularities.
pub fn integrate_tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let width = b - a;
    let half_pi = 0.5 * PI;
    let t_max = 4.5;
    let node = |t: f64| -> f64 {
        let u = half_pi * t.sinh();
        let gap = width / (1.0 + (2.0 * u.abs()).exp());
        if gap <= 0.0 {
            return 0.0;
        }
        let cu = u.cosh();
        let w = 0.5 * width * half_pi * t.cosh() / (cu * cu);
        if !w.is_finite() || w == 0.0 {
            return 0.0;
        }
        let x = if u >= 0.0 { b - gap } else { a + gap };
        if x <= a || x >= b {
            return 0.0;
        }
        w * f(x)
    };
    let mut h = 0.5;
    let mut sum = node(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..10 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            sum += node(t) + node(-t);
            k += 2;
        }
        let next = sum * h;
        let change = (next - estimate).abs();
        estimate = next;
        if change <= tol.max(1e-15 * estimate.abs()) {
            break;
        }
    }
    estimate
}

/// Owen's T function T(h, a) = (1/2π) ∫₀ᵃ e^{−h²(1+x²)/2}/(1+x²) dx.
pub fn owens_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if a < 0.0 {
        return -owens_t(h, -a);
    }
    let half_h2 = 0.5 * h * h;
    let integrand = |x: f64| {
        let q = 1.0 + x * x;
        (-half_h2 * q).exp() / q
    };
    integrate(integrand, 0.0, a, 1e-16) / (2.0 * PI)
}
