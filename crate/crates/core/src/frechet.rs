//! Taylor coefficients of `H -> tr f(H)` (in particular `||H||_p^p`) and
//! the diagnostics around them.
//!
//! For `k >= 2` the bracket form is
//! `delta^[k](V_1, ..., V_k) = (1/k) tr(V_1 T^{H,...,H}_{f~^[k]}(V_2, ..., V_k))`
//! with `f~^[k] = (f')^[k-1]`; for `k = 1` it is `tr(V_1 f'(H))`.

use std::collections::BTreeMap;
use web_time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moi::{moi_exact, MoiRequest, Symbol, MAX_MOI_ORDER};
use crate::scalar::divdiff::DEFAULT_DD_TOL;
use crate::scalar::function::{ScalarFn, ScalarFunctionModel};
use crate::scalar::quadrature::gauss_legendre;
use crate::spectral::{
    pairwise_sum, real_trace, CMatrix, HermitianMatrix, SchattenExponent, SpectralDecomposition, C64, WORKING_BOUND,
};

/// Highest Taylor order handled (`delta^[k]` needs a multiple operator integral of order `k - 1`).
pub const MAX_TAYLOR_ORDER: usize = MAX_MOI_ORDER + 1;

/// Remainders at or below this magnitude are excluded from slope fits.
pub const REMAINDER_FLOOR: f64 = 1e-12;

/// Minimum number of usable points in a slope fit.
pub const MIN_FIT_POINTS: usize = 4;

/// `delta^[k]_H` for `k <= order` at a fixed base point.
#[derive(Debug, Clone)]
pub struct FrechetForm {
    base: SpectralDecomposition,
    f: ScalarFunctionModel,
    exponent: Option<SchattenExponent>,
    order: usize,
    tol: f64,
}

impl FrechetForm {
    /// Forms of `||.||_p^p` at `H`, which must satisfy `||H||_p <= 1`.
    pub fn new(h: &HermitianMatrix, p: f64) -> Result<Self> {
        let exponent = SchattenExponent::new(p)?;
        if exponent.m() > MAX_TAYLOR_ORDER {
            return Err(Error::Unsupported(format!(
                "p = {p} needs Taylor order {} (at most {MAX_TAYLOR_ORDER} supported)",
                exponent.m()
            )));
        }
        let base = h.eigen()?;
        base.check_working_interval()?;
        let norm = crate::spectral::lp_norm(&base.eigenvalues, p);
        if norm > 1.0 + 1e-12 {
            return Err(Error::Precondition(format!("||H||_p = {norm} exceeds 1")));
        }
        Ok(Self { base, f: ScalarFunctionModel::power_abs(p)?, exponent: Some(exponent), order: exponent.m(), tol: DEFAULT_DD_TOL })
    }

    /// Forms of `tr f(H)` for an arbitrary model `f`, up to `order`.
    pub fn with_function(h: &HermitianMatrix, f: ScalarFunctionModel, order: usize) -> Result<Self> {
        if order > MAX_TAYLOR_ORDER {
            return Err(Error::Unsupported(format!("Taylor order {order} (at most {MAX_TAYLOR_ORDER})")));
        }
        if order > f.max_order() {
            return Err(Error::OrderTooHigh { requested: order, available: f.max_order() });
        }
        let base = h.eigen()?;
        for &x in &base.eigenvalues {
            f.check_domain(x)?;
        }
        Ok(Self { base, f, exponent: None, order, tol: DEFAULT_DD_TOL })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn exponent(&self) -> Option<SchattenExponent> {
        self.exponent
    }

    pub fn base(&self) -> &SpectralDecomposition {
        &self.base
    }

    pub fn function(&self) -> &ScalarFunctionModel {
        &self.f
    }

    fn check_order(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.order {
            return Err(Error::OrderTooHigh { requested: k, available: self.order });
        }
        Ok(())
    }

    fn check_dims(&self, vs: &[&CMatrix]) -> Result<()> {
        let d = self.base.dim();
        for v in vs {
            if v.nrows() != d || v.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.nrows() });
            }
        }
        Ok(())
    }

    /// `T^{H,...,H}_{f~^[k]}(V_2, ..., V_k)`.
    fn tilde_moi(&self, rest: &[&CMatrix]) -> Result<CMatrix> {
        let k = rest.len() + 1;
        let req = MoiRequest::diagonal(
            &self.base,
            rest.iter().map(|v| (*v).clone()).collect(),
            Symbol::TildeDividedDifference { f: self.f.clone(), order: k },
        )?
        .with_tol(self.tol);
        moi_exact(&req)
    }

    /// Complex value of the bracket form; the imaginary part vanishes only
    /// after symmetrization (or when all arguments coincide).
    pub fn bracket_complex(&self, vs: &[&CMatrix]) -> Result<C64> {
        self.check_order(vs.len())?;
        self.check_dims(vs)?;
        let k = vs.len();
        let t = self.tilde_moi(&vs[1..])?;
        Ok((vs[0] * t).trace() / k as f64)
    }

    /// `k!`-averaged bracket over all argument orders.
    pub fn symmetric_complex(&self, vs: &[&CMatrix]) -> Result<C64> {
        self.check_order(vs.len())?;
        let perms = permutations(vs.len());
        let mut total = C64::new(0.0, 0.0);
        for perm in &perms {
            let args: Vec<&CMatrix> = perm.iter().map(|&i| vs[i]).collect();
            total += self.bracket_complex(&args)?;
        }
        Ok(total / perms.len() as f64)
    }

    /// `tr(T^{H,...,H}_{f^[k]}(V, ..., V))`.
    pub fn divided_difference_trace(&self, v: &CMatrix, k: usize) -> Result<f64> {
        if k > MAX_MOI_ORDER {
            return Err(Error::Unsupported(format!("multiple operator integrals of order {k}")));
        }
        self.check_dims(&[v])?;
        let req = MoiRequest::diagonal(&self.base, vec![v.clone(); k], Symbol::DividedDifference { f: self.f.clone(), order: k })?
            .with_tol(self.tol);
        real_trace(moi_exact(&req)?.trace())
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn matrices(vs: &[HermitianMatrix]) -> Vec<&CMatrix> {
    vs.iter().map(HermitianMatrix::matrix).collect()
}

/// Real part of the bracket form `delta^[k](V_1, ..., V_k)`. When all
/// arguments coincide the imaginary part is checked to vanish.
pub fn delta_bracket(form: &FrechetForm, vs: &[HermitianMatrix]) -> Result<f64> {
    let z = form.bracket_complex(&matrices(vs))?;
    if vs.windows(2).all(|w| w[0] == w[1]) {
        real_trace(z)
    } else {
        Ok(z.re)
    }
}

/// Symmetrized form `delta^(k)(V_1, ..., V_k)`.
pub fn delta_symmetric(form: &FrechetForm, vs: &[HermitianMatrix]) -> Result<f64> {
    real_trace(form.symmetric_complex(&matrices(vs))?)
}

/// `|tr T_{f^[k]}(V, ..., V) - (1/k) tr(V T_{f~^[k]}(V, ..., V))|`.
pub fn trace_identity_residual(form: &FrechetForm, v: &HermitianMatrix, k: usize) -> Result<f64> {
    form.check_order(k)?;
    let lhs = form.divided_difference_trace(v.matrix(), k)?;
    let rhs = real_trace(form.bracket_complex(&vec![v.matrix(); k])?)?;
    Ok((lhs - rhs).abs())
}

fn schatten_power(h: &HermitianMatrix, p: f64) -> Result<f64> {
    let d = h.eigen()?;
    d.check_working_interval()?;
    let terms: Vec<f64> = d.eigenvalues.iter().map(|x| x.abs().powf(p)).collect();
    Ok(pairwise_sum(&terms))
}

/// Least-squares slope of `log y` against `log x` over points with `y > floor`.
pub fn loglog_slope(x: &[f64], y: &[f64], floor: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.abs() > 0.0 && b.abs() > floor && b.is_finite())
        .map(|(a, b)| (a.abs().ln(), b.abs().ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::GridTooCoarse { usable: pts.len(), required: MIN_FIT_POINTS });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::GridTooCoarse { usable: 1, required: MIN_FIT_POINTS });
    }
    Ok(sxy / sxx)
}

/// Wall-clock data; excluded when reports are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamp {
    pub unix_ms: u128,
    pub elapsed_ms: f64,
}

impl Timestamp {
    pub fn since(start: Instant) -> Self {
        let unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        Self { unix_ms, elapsed_ms: start.elapsed().as_secs_f64() * 1e3 }
    }
}

/// Result of a remainder scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub p: f64,
    pub m: usize,
    /// `delta^(k)(V, ..., V)` for `k = 1..=m`.
    pub deltas: Vec<f64>,
    pub t: Vec<f64>,
    pub remainder: Vec<f64>,
    /// `None` when every remainder is below the fit floor.
    pub slope: Option<f64>,
    /// Finite-difference values of `k! delta^(k)`; `None` where the oracle does not apply.
    pub oracle: Vec<Option<f64>>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<Timestamp>,
}

impl TaylorReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["t", "remainder"]).map_err(err)?;
        for (t, r) in self.t.iter().zip(&self.remainder) {
            w.write_record([t.to_string(), r.to_string()]).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn require_slope(&self) -> Result<f64> {
        self.slope.ok_or(Error::GridTooCoarse { usable: 0, required: MIN_FIT_POINTS })
    }
}

/// Distance from zero below which the finite-difference oracle is skipped.
pub const ORACLE_SPECTRAL_GAP: f64 = 0.05;

/// `R(t) = ||H + tV||_p^p - ||H||_p^p - sum_{k<=m} t^k delta^(k)(V, ..., V)` over `t_grid`.
pub fn taylor_expand(h: &HermitianMatrix, v: &HermitianMatrix, p: f64, t_grid: &[f64]) -> Result<TaylorReport> {
    let start = Instant::now();
    if t_grid.len() < MIN_FIT_POINTS {
        return Err(Error::GridTooCoarse { usable: t_grid.len(), required: MIN_FIT_POINTS });
    }
    let form = FrechetForm::new(h, p)?;
    let m = form.order();
    let deltas: Vec<f64> = (1..=m)
        .map(|k| delta_bracket(&form, &vec![v.clone(); k]))
        .collect::<Result<_>>()?;
    let base = schatten_power(h, p)?;
    let mut remainder = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let moved = schatten_power(&h.add_scaled(t, v)?, p)?;
        let poly: f64 = deltas.iter().enumerate().map(|(i, d)| t.powi(i as i32 + 1) * d).sum();
        remainder.push(moved - base - poly);
    }
    let slope = if remainder.iter().all(|r| r.abs() <= REMAINDER_FLOOR) {
        None
    } else {
        Some(loglog_slope(t_grid, &remainder, REMAINDER_FLOOR)?)
    };
    let smooth = form.base().min_abs_eigenvalue() >= ORACLE_SPECTRAL_GAP;
    let oracle = (1..=m)
        .map(|k| if smooth { fd_oracle(h, v, p, k, None).ok().map(|e| e.value) } else { None })
        .collect();
    let mut tolerances = BTreeMap::new();
    tolerances.insert("remainder_floor".to_string(), REMAINDER_FLOOR);
    tolerances.insert("quadrature".to_string(), DEFAULT_DD_TOL);
    Ok(TaylorReport { p, m, deltas, t: t_grid.to_vec(), remainder, slope, oracle, tolerances, timestamp: Some(Timestamp::since(start)) })
}

/// Both sides of the integral form of the Taylor formula along `H_t = (1-t) H_0 + t H_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralForm {
    pub lhs: f64,
    pub rhs: f64,
    /// Gauss order of the last `t`-integral evaluation.
    pub order: usize,
    /// Whether two successive orders agreed within [`T_INTEGRAL_AGREEMENT`].
    pub converged: bool,
}

/// Agreement required between successive Gauss orders of the `t`-integral.
pub const T_INTEGRAL_AGREEMENT: f64 = 1e-8;
/// Largest Gauss order used for the `t`-integral.
pub const T_INTEGRAL_MAX_ORDER: usize = 64;

/// Points in `(0, 1)` where an eigenvalue of `H_t` changes sign.
fn zero_crossings(h0: &HermitianMatrix, v: &HermitianMatrix) -> Result<Vec<f64>> {
    const GRID: usize = 64;
    let eig = |t: f64| -> Result<Vec<f64>> { Ok(h0.add_scaled(t, v)?.eigen()?.eigenvalues) };
    let mut prev = eig(0.0)?;
    let mut out = Vec::new();
    for step in 1..=GRID {
        let t = step as f64 / GRID as f64;
        let cur = eig(t)?;
        for i in 0..cur.len() {
            if prev[i] * cur[i] < 0.0 {
                let (mut lo, mut hi) = ((step - 1) as f64 / GRID as f64, t);
                let sign_lo = prev[i].signum();
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if eig(mid)?[i].signum() == sign_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        prev = cur;
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(out)
}

/// `tr f(H_1)` versus `tr f(H_0) + sum_{k<m} delta^[k]_{H_0}(V, ...) + int_0^1 t^{m-1} tr(V T^{H_t,H_0,...}_{f~^[m]}(V, ...)) dt`.
///
/// The `t`-integral starts at `start_order` Gauss points per piece and doubles
/// until successive values agree; `[0, 1]` is cut where an eigenvalue of `H_t`
/// crosses zero, and each piece is mapped through `u -> u^2 (3 - 2u)` so that
/// the Hölder endpoint behaviour is integrated accurately.
pub fn taylor_integral_form(
    h0: &HermitianMatrix,
    h1: &HermitianMatrix,
    p: f64,
    m: usize,
    start_order: usize,
) -> Result<IntegralForm> {
    let f = ScalarFunctionModel::power_abs(p)?;
    if m == 0 || m > f.max_order() {
        return Err(Error::OrderTooHigh { requested: m, available: f.max_order() });
    }
    if m > MAX_TAYLOR_ORDER {
        return Err(Error::Unsupported(format!("Taylor order {m}")));
    }
    let v = HermitianMatrix::new(h1.matrix() - h0.matrix())?;
    let lhs = schatten_power(h1, p)?;
    let d0 = h0.eigen()?;
    d0.check_working_interval()?;
    let form = FrechetForm::with_function(h0, f.clone(), m)?;
    let mut rhs = schatten_power(h0, p)?;
    for k in 1..m {
        rhs += real_trace(form.bracket_complex(&vec![v.matrix(); k])?)?;
    }

    let integrand = |t: f64| -> Result<f64> {
        let ht = h0.add_scaled(t, &v)?.eigen()?;
        ht.check_working_interval()?;
        let mut tuple = vec![ht];
        tuple.extend(std::iter::repeat_n(d0.clone(), m - 1));
        let req = MoiRequest::new(tuple, vec![v.matrix().clone(); m - 1], Symbol::TildeDividedDifference { f: f.clone(), order: m })?;
        let tr = real_trace((v.matrix() * moi_exact(&req)?).trace())?;
        Ok(t.powi(m as i32 - 1) * tr)
    };

    let mut breaks = vec![0.0];
    breaks.extend(zero_crossings(h0, &v)?);
    breaks.push(1.0);
    let integrate = |n: usize| -> Result<f64> {
        let g = gauss_legendre(n);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut piece = 0.0;
            for (&u, &wt) in g.nodes.iter().zip(&g.weights) {
                let s = u * u * (3.0 - 2.0 * u);
                let ds = 6.0 * u * (1.0 - u);
                piece += wt * ds * integrand(a + (b - a) * s)?;
            }
            total += (b - a) * piece;
        }
        Ok(total)
    };

    let mut n = start_order.clamp(1, T_INTEGRAL_MAX_ORDER);
    let mut value = integrate(n)?;
    let mut converged = false;
    while n < T_INTEGRAL_MAX_ORDER {
        let next_n = (2 * n).min(T_INTEGRAL_MAX_ORDER);
        let next = integrate(next_n)?;
        let agree = (next - value).abs() <= T_INTEGRAL_AGREEMENT;
        value = next;
        n = next_n;
        if agree {
            converged = true;
            break;
        }
    }
    Ok(IntegralForm { lhs, rhs: rhs + value, order: n, converged })
}

/// `alpha(X) = 2^{-1/p} [[0, X], [X*, 0]]`.
pub fn selfadjoint_embed(x: &CMatrix, p: f64) -> Result<HermitianMatrix> {
    if x.nrows() != x.ncols() {
        return Err(Error::NotSquare { rows: x.nrows(), cols: x.ncols() });
    }
    let d = x.nrows();
    let scale = C64::new(2f64.powf(-1.0 / p), 0.0);
    let mut out = CMatrix::zeros(2 * d, 2 * d);
    out.view_mut((0, d), (d, d)).copy_from(&(x * scale));
    out.view_mut((d, 0), (d, d)).copy_from(&(x.adjoint() * scale));
    HermitianMatrix::new(out)
}

/// `delta^(k)_H(V, ..., V)` for arbitrary square `H`, `V`, computed through the embedding.
///
/// `alpha` preserves `||.||_p^p`, so the coefficients of `t -> ||alpha(H) + t alpha(V)||_p^p`
/// are those of `t -> ||H + tV||_p^p` with no extra factor.
pub fn delta_general(h: &CMatrix, v: &CMatrix, p: f64, k: usize) -> Result<f64> {
    let form = FrechetForm::new(&selfadjoint_embed(h, p)?, p)?;
    let av = selfadjoint_embed(v, p)?;
    delta_bracket(&form, &vec![av; k])
}

/// Finite-difference estimate of `d^k/dt^k tr f_p(H + tV)` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    /// `|D(h) - D(h/2)|`.
    pub error: f64,
    pub step: f64,
}

/// Weights of the `k`-th derivative at 0 on the given offsets (Fornberg's recursion).
pub fn fornberg_weights(offsets: &[f64], k: usize) -> Vec<f64> {
    let n = offsets.len();
    let mut c = vec![vec![0.0; k + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let mn = i.min(k);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for s in (1..=mn).rev() {
                    c[i][s] = c1 * (s as f64 * c[i - 1][s - 1] - c5 * c[i - 1][s]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for s in (1..=mn).rev() {
                c[j][s] = (c4 * c[j][s] - s as f64 * c[j][s - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[k]).collect()
}

/// Central stencil of half-width `ceil(k/2) + 1`, which is fourth-order
/// accurate for `k <= 3`; the step defaults to the matching balance
/// `eps^{1/(k+4)} (1 + ||H||_inf) / (1 + ||V||_inf)`.
pub fn fd_oracle(h: &HermitianMatrix, v: &HermitianMatrix, p: f64, k: usize, step: Option<f64>) -> Result<FdEstimate> {
    SchattenExponent::new(p)?;
    if k == 0 {
        return Err(Error::OutOfRange("derivative order must be positive".into()));
    }
    let r = k.div_ceil(2) + 1;
    let step = match step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::OutOfRange(format!("step {s}"))),
        None => f64::EPSILON.powf(1.0 / (k as f64 + 4.0)) * (1.0 + h.operator_norm()?) / (1.0 + v.operator_norm()?),
    };
    let offsets: Vec<f64> = (-(r as i64)..=r as i64).map(|i| i as f64).collect();
    let weights = fornberg_weights(&offsets, k);
    let g = |t: f64| -> Result<f64> {
        let d = h.add_scaled(t, v)?.eigen()?;
        for &x in &d.eigenvalues {
            if x.abs() > WORKING_BOUND {
                return Err(Error::OutsideWorkingInterval { value: x });
            }
        }
        let terms: Vec<f64> = d.eigenvalues.iter().map(|x| x.abs().powf(p)).collect();
        Ok(pairwise_sum(&terms))
    };
    let derivative = |hs: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (o, w) in offsets.iter().zip(&weights) {
            acc += w * g(o * hs)?;
        }
        Ok(acc / hs.powi(k as i32))
    };
    let coarse = derivative(step)?;
    let fine = derivative(0.5 * step)?;
    Ok(FdEstimate { value: fine, error: (coarse - fine).abs(), step: 0.5 * step })
}
