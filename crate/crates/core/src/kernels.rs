//! Scalar kernel families and the derivatives used by Stein discrepancies.

use serde::{Deserialize, Serialize};

use crate::error::{nonnegative, positive, Error, Result};
use crate::special::ln_gamma;

/// A positive-definite kernel on the real line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// e^{−a(x−y)² + bxy}
    GaussianExponentiated { a: f64, b: f64 },
    /// Half-integer Matérn kernel with smoothness p + 1/2.
    Matern { sigma0: f64, sigma: f64, p: u32 },
    /// e^{−(x−y)²/(2c²)}
    Gaussian { c: f64 },
    /// e^{−λ|x−y|}
    Laplacian { lambda: f64 },
    /// e^{bxy}
    Exponential { b: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::GaussianExponentiated { a, b } => {
                nonnegative("a", a)?;
                nonnegative("b", b)
            }
            KernelSpec::Matern { sigma0, sigma, .. } => {
                positive("sigma0", sigma0)?;
                positive("sigma", sigma)
            }
            KernelSpec::Gaussian { c } => positive("c", c),
            KernelSpec::Laplacian { lambda } => positive("lambda", lambda),
            KernelSpec::Exponential { b } => positive("b", b),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::GaussianExponentiated { .. } => "gaussian_exponentiated",
            KernelSpec::Matern { .. } => "matern",
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Laplacian { .. } => "laplacian",
            KernelSpec::Exponential { .. } => "exponential",
        }
    }

    /// k(x, y).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            KernelSpec::GaussianExponentiated { a, b } => {
                let d = x - y;
                (-a * d * d + b * x * y).exp()
            }
            KernelSpec::Matern { sigma0, sigma, p } => {
                MaternPoly::new(sigma0, sigma, p).eval((x - y).abs())
            }
            KernelSpec::Gaussian { c } => {
                let d = x - y;
                (-d * d / (2.0 * c * c)).exp()
            }
            KernelSpec::Laplacian { lambda } => (-lambda * (x - y).abs()).exp(),
            KernelSpec::Exponential { b } => (b * x * y).exp(),
        }
    }

    /// ∂k/∂x. Only the Gaussian and Laplacian families carry derivative
    /// formulas; the Laplacian uses sign(0) = 0 at the kink.
    pub fn dx(&self, x: f64, y: f64) -> Result<f64> {
        match *self {
            KernelSpec::Gaussian { c } => {
                let c2 = c * c;
                Ok(-(x - y) / c2 * self.eval(x, y))
            }
            KernelSpec::Laplacian { lambda } => Ok(-lambda * sign(x - y) * self.eval(x, y)),
            _ => Err(Error::UnsupportedKernel(self.name().to_string())),
        }
    }

    /// ∂²k/∂x∂y.
    pub fn dxdy(&self, x: f64, y: f64) -> Result<f64> {
        match *self {
            KernelSpec::Gaussian { c } => {
                let c2 = c * c;
                let d = x - y;
                Ok((1.0 / c2 - d * d / (c2 * c2)) * self.eval(x, y))
            }
            KernelSpec::Laplacian { lambda } => Ok(-lambda * lambda * self.eval(x, y)),
            _ => Err(Error::UnsupportedKernel(self.name().to_string())),
        }
    }

    pub fn has_derivatives(&self) -> bool {
        matches!(self, KernelSpec::Gaussian { .. } | KernelSpec::Laplacian { .. })
    }

    /// Whether k is bounded by k(x, x) = const (translation invariant families).
    pub fn is_translation_invariant(&self) -> bool {
        match *self {
            KernelSpec::GaussianExponentiated { b, .. } => b == 0.0,
            KernelSpec::Exponential { .. } => false,
            _ => true,
        }
    }
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

/// The Matérn kernel written as e^{−θd} Σₙ cₙ dⁿ in the distance d = |x − y|.
#[derive(Clone, Debug, PartialEq)]
pub struct MaternPoly {
    pub theta: f64,
    /// cₙ multiplies dⁿ, n = 0..=p.
    pub coeffs: Vec<f64>,
}

impl MaternPoly {
    pub fn new(sigma0: f64, sigma: f64, p: u32) -> Self {
        let theta = (2.0 * p as f64 + 1.0).sqrt() / sigma;
        let scale = sigma0 * sigma0;
        // term i of the finite sum carries d^{p−i}; index by n = p − i:
        // p!/(2p)! · (2p−n)!/(n!(p−n)!) · (2θ)ⁿ
        let coeffs = (0..=p)
            .map(|n| scale * factorial_ratio(p, n) * (2.0 * theta).powi(n as i32))
            .collect();
        Self { theta, coeffs }
    }

    pub fn p(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, d: f64) -> f64 {
        let poly = self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * d + c);
        (-self.theta * d).exp() * poly
    }
}

/// p!(2p−n)! / ((2p)! n! (p−n)!), exactly for p < 10, via log-gamma above.
fn factorial_ratio(p: u32, n: u32) -> f64 {
    if p < 10 {
        let f = |k: u32| (1..=k as u128).product::<u128>();
        let num = f(p) * f(2 * p - n);
        let den = f(2 * p) * f(n) * f(p - n);
        // reduce before converting so the quotient is correctly rounded
        let g = gcd(num, den);
        (num / g) as f64 / (den / g) as f64
    } else {
        let lf = |k: u32| ln_gamma(k as f64 + 1.0);
        (lf(p) + lf(2 * p - n) - lf(2 * p) - lf(n) - lf(p - n)).exp()
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn documented_values() {
        assert_eq!(KernelSpec::Gaussian { c: 1.0 }.eval(0.0, 0.0), 1.0);
        let m = KernelSpec::Matern { sigma0: 1.0, sigma: 2.0, p: 0 };
        assert!((m.eval(0.0, 1.0) - (-0.5f64).exp()).abs() < 1e-15);
        let ge = KernelSpec::GaussianExponentiated { a: 1.0, b: 1.0 };
        assert!((ge.eval(1.0, 2.0) - E).abs() < 1e-15);
    }

    #[test]
    fn derivative_values() {
        let g = KernelSpec::Gaussian { c: 1.0 };
        assert_eq!(g.dx(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(g.dxdy(0.0, 0.0).unwrap(), 1.0);
        let l = KernelSpec::Laplacian { lambda: 2.0 };
        assert!((l.dxdy(0.0, 1.0).unwrap() + 4.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(l.dx(0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn unsupported_derivatives() {
        for k in [
            KernelSpec::Exponential { b: 1.0 },
            KernelSpec::Matern { sigma0: 1.0, sigma: 1.0, p: 1 },
            KernelSpec::GaussianExponentiated { a: 1.0, b: 0.0 },
        ] {
            assert!(matches!(k.dx(0.0, 1.0), Err(Error::UnsupportedKernel(_))));
            assert!(matches!(k.dxdy(0.0, 1.0), Err(Error::UnsupportedKernel(_))));
        }
    }

    #[test]
    fn matern_three_halves_and_five_halves() {
        // textbook forms: p=1 → (1+√3d/σ)e^{−√3d/σ}; p=2 → (1+√5d/σ+5d²/(3σ²))e^{−√5d/σ}
        let sigma = 0.7;
        for &d in &[0.0, 0.1, 0.5, 2.0] {
            let r3 = 3f64.sqrt() * d / sigma;
            let k1 = KernelSpec::Matern { sigma0: 1.0, sigma, p: 1 }.eval(0.0, d);
            assert!((k1 - (1.0 + r3) * (-r3).exp()).abs() < 1e-15);
            let r5 = 5f64.sqrt() * d / sigma;
            let k2 = KernelSpec::Matern { sigma0: 1.0, sigma, p: 2 }.eval(d, 0.0);
            let want = (1.0 + r5 + r5 * r5 / 3.0) * (-r5).exp();
            assert!((k2 - want).abs() < 1e-15);
        }
    }

    #[test]
    fn matern_log_space_branch_continues_exact_branch() {
        // p = 9 is exact, p = 10 goes through log-gamma; both are 1 at d = 0
        for p in [9, 10, 15, 40] {
            let k = KernelSpec::Matern { sigma0: 1.0, sigma: 1.0, p };
            assert!((k.eval(0.0, 0.0) - 1.0).abs() < 1e-12, "p = {p}");
        }
        let lf = |k: u32| ln_gamma(k as f64 + 1.0);
        for n in 0..=9 {
            let exact = factorial_ratio(9, n);
            let logged = (lf(9) + lf(18 - n) - lf(18) - lf(n) - lf(9 - n)).exp();
            assert!((exact - logged).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(KernelSpec::Gaussian { c: 0.0 }.validate().is_err());
        assert!(KernelSpec::Laplacian { lambda: -1.0 }.validate().is_err());
        assert!(KernelSpec::GaussianExponentiated { a: 0.0, b: 0.0 }.validate().is_ok());
        assert!(KernelSpec::Exponential { b: f64::NAN }.validate().is_err());
    }
}
