//! Polynomial integral momenta
//! `phi(x_0, ..., x_m) = int_{S_m} Q(s_0, ..., s_m) h(s_0 x_0 + ... + s_m x_m) dsigma_m`,
//! evaluated over the corner simplex `R_m` with `s_0 = 1 - s_1 - ... - s_m`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::function::{ScalarFn, ScalarFunctionModel};
use crate::scalar::quadrature::{integrate_simplex, KinkHyperplane};

/// Points-per-axis ladder used while escalating toward a tolerance.
pub const DEGREE_LADDER: [usize; 9] = [3, 4, 6, 8, 12, 16, 24, 32, 40];

/// Integrand `h` of a momentum.
#[derive(Clone)]
pub enum Kernel {
    /// `h = f^(order)`.
    Model { f: ScalarFunctionModel, order: usize },
    /// Opaque callable; usable for evaluation only.
    Raw(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Model { f: model, order } => write!(f, "Model({model:?}, order {order})"),
            Kernel::Raw(_) => write!(f, "Raw(<fn>)"),
        }
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Kernel::Model { f: a, order: i }, Kernel::Model { f: b, order: j }) => a == b && i == j,
            (Kernel::Raw(a), Kernel::Raw(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Kernel {
    pub fn model(f: ScalarFunctionModel) -> Self {
        Kernel::Model { f, order: 0 }
    }

    pub fn raw(h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Raw(Arc::new(h))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::Model { f, order } => f.derivative(*order, x),
            Kernel::Raw(h) => h(x),
        }
    }

    /// `h'`, when a derivative is available.
    pub fn derivative(&self) -> Result<Kernel> {
        match self {
            Kernel::Model { f, order } => {
                if order + 1 > f.max_order() {
                    return Err(Error::OrderTooHigh { requested: order + 1, available: f.max_order() });
                }
                Ok(Kernel::Model { f: f.clone(), order: order + 1 })
            }
            Kernel::Raw(_) => Err(Error::KernelNotDifferentiable),
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        match self {
            Kernel::Model { f, .. } => f.check_domain(x),
            Kernel::Raw(_) => Ok(()),
        }
    }

    fn kinked(&self) -> bool {
        match self {
            Kernel::Model { f, order } => f.kinked_at_zero(*order),
            // Nothing is known about a raw callable; assume the worst at zero.
            Kernel::Raw(_) => true,
        }
    }

    /// Polynomial degree of `h`, if it is a polynomial.
    fn polynomial_degree(&self) -> Option<usize> {
        match self {
            Kernel::Model { f, order } => match f {
                ScalarFunctionModel::Monomial { n } => Some((*n as usize).saturating_sub(*order)),
                ScalarFunctionModel::Polynomial { coeffs } => Some(coeffs.len().saturating_sub(1 + order)),
                ScalarFunctionModel::PowerAbs { p } => {
                    (!f.kinked_at_zero(*order)).then(|| (*p as usize).saturating_sub(*order))
                }
            },
            Kernel::Raw(_) => None,
        }
    }
}

/// One monomial `c * s_0^{a_0} ... s_m^{a_m}` of `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTerm {
    pub alpha: Vec<u32>,
    pub c: f64,
}

/// `(m, h, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSpec {
    pub m: usize,
    pub kernel: Kernel,
    pub q: Vec<QTerm>,
}

impl MomentumSpec {
    pub fn new(m: usize, kernel: Kernel, q: Vec<QTerm>) -> Result<Self> {
        if m < 1 {
            return Err(Error::OutOfRange("momentum order must be at least 1".into()));
        }
        for t in &q {
            if t.alpha.len() != m + 1 {
                return Err(Error::DimensionMismatch { expected: m + 1, found: t.alpha.len() });
            }
        }
        Ok(Self { m, kernel, q })
    }

    /// `Q = 1`.
    pub fn unit_q(m: usize, kernel: Kernel) -> Result<Self> {
        Self::new(m, kernel, vec![QTerm { alpha: vec![0; m + 1], c: 1.0 }])
    }

    pub fn q_degree(&self) -> usize {
        self.q.iter().map(|t| t.alpha.iter().sum::<u32>() as usize).max().unwrap_or(0)
    }

    /// `Q(s_0, ..., s_m)`.
    pub fn q_at(&self, s: &[f64]) -> f64 {
        self.q.iter().map(|t| t.c * t.alpha.iter().zip(s).map(|(&a, &x)| x.powi(a as i32)).product::<f64>()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MomentumWire::try_from(self)?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: MomentumWire = serde_json::from_str(text)?;
        wire.try_into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum KernelWire {
    PowerAbs {
        p: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        derivative: usize,
    },
    Poly {
        coeffs: Vec<f64>,
        #[serde(default, skip_serializing_if = "is_zero")]
        derivative: usize,
    },
}

fn is_zero(k: &usize) -> bool {
    *k == 0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MomentumWire {
    m: usize,
    kernel: KernelWire,
    #[serde(rename = "Q")]
    q: Vec<QTerm>,
}

impl TryFrom<&MomentumSpec> for MomentumWire {
    type Error = Error;

    fn try_from(spec: &MomentumSpec) -> Result<Self> {
        let kernel = match &spec.kernel {
            Kernel::Model { f: ScalarFunctionModel::PowerAbs { p }, order } => {
                KernelWire::PowerAbs { p: *p, derivative: *order }
            }
            Kernel::Model { f: ScalarFunctionModel::Polynomial { coeffs }, order } => {
                KernelWire::Poly { coeffs: coeffs.clone(), derivative: *order }
            }
            Kernel::Model { f: ScalarFunctionModel::Monomial { n }, order } => {
                let mut coeffs = vec![0.0; *n as usize + 1];
                coeffs[*n as usize] = 1.0;
                KernelWire::Poly { coeffs, derivative: *order }
            }
            Kernel::Raw(_) => return Err(Error::Unsupported("raw kernels cannot be serialized".into())),
        };
        Ok(Self { m: spec.m, kernel, q: spec.q.clone() })
    }
}

impl TryFrom<MomentumWire> for MomentumSpec {
    type Error = Error;

    fn try_from(w: MomentumWire) -> Result<Self> {
        let kernel = match w.kernel {
            KernelWire::PowerAbs { p, derivative } => {
                let f = ScalarFunctionModel::power_abs(p)?;
                if derivative > f.max_order() {
                    return Err(Error::OrderTooHigh { requested: derivative, available: f.max_order() });
                }
                Kernel::Model { f, order: derivative }
            }
            KernelWire::Poly { coeffs, derivative } => {
                Kernel::Model { f: ScalarFunctionModel::Polynomial { coeffs }, order: derivative }
            }
        };
        MomentumSpec::new(w.m, kernel, w.q)
    }
}

fn points_for_degree(total_degree: usize, m: usize) -> usize {
    // The collapsed rule with n points per axis is exact through degree 2n - m.
    (total_degree + m).div_ceil(2).max(1)
}

/// Evaluate `phi_{m,h,Q}(x)` to absolute accuracy `tol`.
pub fn momentum_eval(spec: &MomentumSpec, x: &[f64], tol: f64) -> Result<f64> {
    let m = spec.m;
    if x.len() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, found: x.len() });
    }
    for &xi in x {
        spec.kernel.check_domain(xi)?;
    }
    let integrand = |s: &[f64]| {
        let s0 = 1.0 - s.iter().sum::<f64>();
        let mut arg = s0 * x[0];
        let mut full = [0.0; 5];
        full[0] = s0;
        for (j, &sj) in s.iter().enumerate() {
            arg += sj * x[j + 1];
            full[j + 1] = sj;
        }
        spec.q_at(&full[..=m]) * spec.kernel.eval(arg)
    };
    let finish = |v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::SymbolEvaluation { point: x.to_vec() })
        }
    };

    if let Some(deg) = spec.kernel.polynomial_degree() {
        let n = points_for_degree(deg + spec.q_degree(), m);
        return finish(integrate_simplex(m, n, None, tol, &integrand)?);
    }

    let kink = spec.kernel.kinked().then(|| KinkHyperplane::new(x.to_vec()).with_cofactor_degree(spec.q_degree()));
    let mut previous: Option<f64> = None;
    let mut gap = f64::INFINITY;
    for &n in &DEGREE_LADDER {
        let value = finish(integrate_simplex(m, n, kink.as_ref(), tol, &integrand)?)?;
        if let Some(prev) = previous {
            gap = (value - prev).abs();
            if gap <= tol {
                return Ok(value);
            }
        }
        previous = Some(value);
    }
    Err(Error::QuadratureNotConverged { tol, achieved: gap })
}

/// Momentum `phi_{m+1, h', Q_1}` with `Q_1(s_0, s_1, s_2, ...) = Q(s_0 + s_1, s_2, ...)`,
/// the divided difference in the first variable of `phi`.
pub fn momentum_perturbation_pair(spec: &MomentumSpec) -> Result<MomentumSpec> {
    let kernel = spec.kernel.derivative()?;
    let mut q = Vec::new();
    for term in &spec.q {
        // Binomial expansion of (s_0 + s_1)^{a_0}.
        let a0 = term.alpha[0];
        let mut binom = 1.0;
        for i in 0..=a0 {
            let mut alpha = Vec::with_capacity(spec.m + 2);
            alpha.push(a0 - i);
            alpha.push(i);
            alpha.extend_from_slice(&term.alpha[1..]);
            q.push(QTerm { alpha, c: term.c * binom });
            binom = binom * (a0 - i) as f64 / (i + 1) as f64;
        }
    }
    MomentumSpec::new(spec.m + 1, kernel, q)
}
