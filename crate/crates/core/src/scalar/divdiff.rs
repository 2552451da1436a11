//! Divided differences `f^[k](x_0, ..., x_k)`.
//!
//! Well-separated nodes go through a Newton table (confluent entries use
//! `f^(j)(x) / j!`); nodes closer than [`CONFLUENCE_GAP`] relative to their
//! spread are integrated over the simplex instead.

use crate::error::{Error, Result};
use crate::scalar::function::{ScalarFn, ScalarFunctionModel};
use crate::scalar::momentum::{momentum_eval, Kernel, MomentumSpec};

/// Relative node gap below which the recursion is abandoned.
pub const CONFLUENCE_GAP: f64 = 1e-6;

/// Quadrature tolerance used when a caller does not pass one.
pub const DEFAULT_DD_TOL: f64 = 1e-11;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn sorted(nodes: &[f64]) -> Vec<f64> {
    let mut x = nodes.to_vec();
    x.sort_by(f64::total_cmp);
    x
}

fn check(f: &dyn ScalarFn, nodes: &[f64], order_shift: usize) -> Result<usize> {
    if nodes.is_empty() {
        return Err(Error::OutOfRange("divided difference needs at least one node".into()));
    }
    let k = nodes.len() - 1;
    if k + order_shift > f.max_order() {
        return Err(Error::OrderTooHigh { requested: k + order_shift, available: f.max_order() });
    }
    for &x in nodes {
        if x.is_nan() {
            return Err(Error::SymbolEvaluation { point: nodes.to_vec() });
        }
        f.check_domain(x)?;
    }
    Ok(k)
}

/// Newton-table divided difference of any [`ScalarFn`]; nodes are sorted first
/// and exactly equal nodes use derivatives.
pub fn divided_difference_recursive(f: &dyn ScalarFn, nodes: &[f64]) -> Result<f64> {
    let k = check(f, nodes, 0)?;
    let x = sorted(nodes);
    // table[i] holds f[x_i, ..., x_{i+level}] after each level.
    let mut table: Vec<f64> = x.iter().map(|&xi| f.derivative(0, xi)).collect();
    for level in 1..=k {
        for i in 0..=(k - level) {
            let (a, b) = (x[i], x[i + level]);
            table[i] = if a == b {
                f.derivative(level, a) / factorial(level)
            } else {
                (table[i + 1] - table[i]) / (b - a)
            };
        }
    }
    Ok(table[0])
}

fn needs_integral(nodes: &[f64]) -> bool {
    let x = sorted(nodes);
    let spread = x[x.len() - 1] - x[0];
    let threshold = CONFLUENCE_GAP * (1.0 + spread);
    x.windows(2).any(|w| {
        let gap = w[1] - w[0];
        gap > 0.0 && gap < threshold
    })
}

/// `(f^(shift))^[k]` over `nodes`, choosing the recursion or the integral form.
pub fn derived_divided_difference(f: &ScalarFunctionModel, shift: usize, nodes: &[f64], tol: f64) -> Result<f64> {
    let k = check(f, nodes, shift)?;
    if k > 0 && needs_integral(nodes) {
        let spec = MomentumSpec::unit_q(k, Kernel::Model { f: f.clone(), order: shift + k })?;
        return momentum_eval(&spec, nodes, tol);
    }
    divided_difference_recursive(&f.derived(shift), nodes)
}

/// `f^[k](nodes)` with `k = nodes.len() - 1`.
pub fn divided_difference(f: &ScalarFunctionModel, nodes: &[f64]) -> Result<f64> {
    divided_difference_tol(f, nodes, DEFAULT_DD_TOL)
}

pub fn divided_difference_tol(f: &ScalarFunctionModel, nodes: &[f64], tol: f64) -> Result<f64> {
    derived_divided_difference(f, 0, nodes, tol)
}

/// `int_{S_k} f^(k)(s . x) dsigma_k`, always by quadrature.
pub fn divided_difference_via_momentum(f: &ScalarFunctionModel, nodes: &[f64], tol: f64) -> Result<f64> {
    let k = check(f, nodes, 0)?;
    if k == 0 {
        return Ok(f.derivative(0, nodes[0]));
    }
    let spec = MomentumSpec::unit_q(k, Kernel::Model { f: f.clone(), order: k })?;
    momentum_eval(&spec, nodes, tol)
}

/// `g^[m-1](nodes)` with `g = f'` and `m = nodes.len()`.
pub fn tilde_divided_difference(f: &ScalarFunctionModel, nodes: &[f64]) -> Result<f64> {
    derived_divided_difference(f, 1, nodes, DEFAULT_DD_TOL)
}
