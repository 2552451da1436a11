//! Scalar function models carrying their derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SchattenExponent, WORKING_BOUND};

/// Anything that can report `f^(k)(x)` for `k <= max_order()`.
pub trait ScalarFn: Send + Sync {
    /// `f^(k)(x)`; `k = 0` is the function itself.
    fn derivative(&self, k: usize, x: f64) -> f64;

    fn max_order(&self) -> usize;

    fn domain(&self) -> (f64, f64);

    /// Whether `f^(k)` fails to be analytic at `x = 0`. Quadrature rules use
    /// this to split the simplex along the hyperplane where the argument vanishes.
    fn kinked_at_zero(&self, k: usize) -> bool;

    fn check_domain(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if x >= lo && x <= hi {
            Ok(())
        } else {
            Err(Error::OutsideDomain { value: x, lo, hi })
        }
    }
}

/// Concrete function models.
///
/// `PowerAbs { p }` is `f_p(x) = |x|^p` on the working interval `[-2, 2]`,
/// differentiable up to order `m` where `m < p <= m + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFunctionModel {
    PowerAbs { p: f64 },
    Monomial { n: u32 },
    /// Coefficients in ascending powers.
    Polynomial { coeffs: Vec<f64> },
}

impl ScalarFunctionModel {
    pub fn power_abs(p: f64) -> Result<Self> {
        SchattenExponent::new(p)?;
        Ok(Self::PowerAbs { p })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::Polynomial { coeffs }
    }

    /// Hölder exponent of the top derivative when it is below one.
    pub fn top_holder_exponent(&self) -> Option<f64> {
        match self {
            Self::PowerAbs { p } => {
                let alpha = p - p.ceil() + 1.0;
                (alpha < 1.0).then_some(alpha)
            }
            _ => None,
        }
    }

    /// View of `f^(shift)` as a function in its own right.
    pub fn derived(&self, shift: usize) -> Derived<'_> {
        Derived { base: self, shift }
    }
}

/// Falling factorial `p (p-1) ... (p-k+1)`.
pub fn falling_factorial(p: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (p - j as f64))
}

fn poly_derivative(coeffs: &[f64], k: usize, x: f64) -> f64 {
    let mut acc = 0.0;
    for (i, &c) in coeffs.iter().enumerate().skip(k).rev() {
        acc = acc * x + c * falling_factorial(i as f64, k);
    }
    acc
}

impl ScalarFn for ScalarFunctionModel {
    fn derivative(&self, k: usize, x: f64) -> f64 {
        match self {
            Self::PowerAbs { p } => {
                let e = p - k as f64;
                let mag = if e == 0.0 { 1.0 } else { x.abs().powf(e) };
                let sign = if k % 2 == 1 && x < 0.0 { -1.0 } else { 1.0 };
                falling_factorial(*p, k) * mag * sign
            }
            Self::Monomial { n } => {
                let n = *n as usize;
                if k > n {
                    0.0
                } else {
                    falling_factorial(n as f64, k) * x.powi((n - k) as i32)
                }
            }
            Self::Polynomial { coeffs } => poly_derivative(coeffs, k, x),
        }
    }

    fn max_order(&self) -> usize {
        match self {
            Self::PowerAbs { p } => (p.ceil() as usize).saturating_sub(1),
            _ => usize::MAX / 2,
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            Self::PowerAbs { .. } => (-WORKING_BOUND, WORKING_BOUND),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn kinked_at_zero(&self, k: usize) -> bool {
        match self {
            // |x|^e sgn(x)^k is a polynomial only for an even integer p.
            Self::PowerAbs { p } => !(p.fract() == 0.0 && (*p as i64) % 2 == 0 && k as f64 <= *p),
            _ => false,
        }
    }
}

/// `g = f^(shift)` viewed as a scalar function.
#[derive(Debug, Clone, Copy)]
pub struct Derived<'a> {
    base: &'a ScalarFunctionModel,
    shift: usize,
}

impl ScalarFn for Derived<'_> {
    fn derivative(&self, k: usize, x: f64) -> f64 {
        self.base.derivative(k + self.shift, x)
    }

    fn max_order(&self) -> usize {
        self.base.max_order().saturating_sub(self.shift)
    }

    fn domain(&self) -> (f64, f64) {
        self.base.domain()
    }

    fn kinked_at_zero(&self, k: usize) -> bool {
        self.base.kinked_at_zero(k + self.shift)
    }
}
