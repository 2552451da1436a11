//! Experiment drivers. Instances run in parallel; checks are recorded in seed order.

use std::sync::Arc;
use web_time::Instant;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::frechet::{
    delta_symmetric, fd_oracle, loglog_slope, taylor_expand, taylor_integral_form, trace_identity_residual,
    FrechetForm, TaylorReport, MAX_TAYLOR_ORDER,
};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::instance::{generate_instance, SpectralProfile};
use crate::harness::report::RunReport;
use crate::harness::rng::SeededRng;
use crate::moi::{
    algebraic_shift, moi_binned, moi_exact, moi_separable, perturbation_identity, MoiRequest, SeparableSymbol,
    Symbol, UnaryFn, MAX_MOI_ORDER,
};
use crate::scalar::function::ScalarFunctionModel;
use crate::scalar::momentum::{Kernel, MomentumSpec, QTerm};
use crate::spectral::{frobenius, schatten_norm, CMatrix, HermitianMatrix, SchattenExponent, SpectralDecomposition};

/// Differences below this count as zero in Hölder scans.
pub const HOLDER_FLOOR: f64 = 1e-14;

/// Operator-norm scale of the integral-form segment `H_1 - H_0`, measured in `||.||_2`.
pub const INTEGRAL_SEGMENT: f64 = 0.3;

fn ordered_map<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(|&s| f(s)).collect()
    }
}

/// Auxiliary instance `j >= 1` attached to `seed`.
fn aux_instance(seed: u64, j: u64, dim: usize) -> Result<(HermitianMatrix, HermitianMatrix)> {
    generate_instance(seed ^ (j << 40), dim, SpectralProfile::Generic)
}

/// Dispatch on `config.mode`. Derivative mode uses generated instances.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    match config.mode {
        Mode::Derivative => run_derivative_battery(config),
        Mode::TaylorScan => run_taylor_scan(config),
        Mode::MoiConvergence => run_moi_convergence(config),
        Mode::HolderScan => run_holder_scan(config),
        Mode::PerturbationCheck => run_perturbation_check(config),
        Mode::Selftest => run_selftest(config),
    }
}

fn orders(config: &ExperimentConfig, m: usize) -> Result<Vec<usize>> {
    match config.order {
        Some(k) if k > m => Err(Error::OrderTooHigh { requested: k, available: m }),
        Some(k) => Ok(vec![k]),
        None => Ok((1..=m).collect()),
    }
}

/// `delta^(k)(V_1, ..., V_k)` at a given `H`. A single direction is repeated `k`
/// times and then compared with the finite-difference oracle.
pub fn run_derivative(config: &ExperimentConfig, h: &HermitianMatrix, dirs: &[HermitianMatrix]) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let form = FrechetForm::new(h, config.p)?.with_tol(config.tolerances.quadrature);
    let m = form.order();
    let k = config.order.unwrap_or(dirs.len().max(1));
    if k > m {
        return Err(Error::OrderTooHigh { requested: k, available: m });
    }
    let args: Vec<HermitianMatrix> = match dirs.len() {
        1 => vec![dirs[0].clone(); k],
        n if n == k => dirs.to_vec(),
        n => return Err(Error::DimensionMismatch { expected: k, found: n }),
    };
    let delta = delta_symmetric(&form, &args)?;
    let derivative = factorial(k) * delta;
    let mut report = RunReport::new(config.clone());
    let mut data = json!({ "p": config.p, "order": k, "delta": delta, "derivative": derivative });
    let equal = args.windows(2).all(|w| w[0] == w[1]);
    if equal && form.base().min_abs_eigenvalue() >= crate::frechet::ORACLE_SPECTRAL_GAP {
        let fd = fd_oracle(h, &args[0], config.p, k, None)?;
        data["fd"] = json!({ "value": fd.value, "error": fd.error, "step": fd.step });
        report.check_le("fd_match", (derivative - fd.value).abs(), config.tolerances.fd_bound(fd.value))?;
    }
    report.data = data;
    report.stamp(start);
    Ok(report)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `k! delta^(k)(V, ..., V)` against the finite-difference oracle on every seed.
pub fn run_derivative_battery(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let m = SchattenExponent::new(config.p)?.m();
    let ks = orders(config, m)?;
    let seeds = config.seed_list();
    let rows = ordered_map(&seeds, |seed| {
        let (h, v) = generate_instance(seed, config.dim, config.profile)?;
        let form = FrechetForm::new(&h, config.p)?.with_tol(config.tolerances.quadrature);
        ks.iter()
            .map(|&k| {
                let value = factorial(k) * delta_symmetric(&form, &vec![v.clone(); k])?;
                let fd = fd_oracle(&h, &v, config.p, k, None)?;
                Ok((k, value, fd.value, fd.error))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut report = RunReport::new(config.clone());
    let mut data = Vec::new();
    for (seed, row) in seeds.iter().zip(&rows) {
        for &(k, value, fd, err) in row {
            report.check_le(format!("seed={seed}/k={k}/fd_match"), (value - fd).abs(), config.tolerances.fd_bound(fd))?;
            data.push(json!({ "seed": seed, "k": k, "derivative": value, "fd": fd, "fd_error": err }));
        }
    }
    report.data = Value::Array(data);
    report.stamp(start);
    Ok(report)
}

/// Remainder scans over `config.t_grid`.
pub fn run_taylor_scan(config: &ExperimentConfig) -> Result<RunReport> {
    Ok(taylor_scan_with_reports(config)?.0)
}

/// [`run_taylor_scan`] together with the per-seed Taylor reports.
pub fn taylor_scan_with_reports(config: &ExperimentConfig) -> Result<(RunReport, Vec<TaylorReport>)> {
    config.validate()?;
    let start = Instant::now();
    let seeds = config.seed_list();
    let scans: Vec<TaylorReport> = ordered_map(&seeds, |seed| {
        let (h, v) = generate_instance(seed, config.dim, config.profile)?;
        taylor_expand(&h, &v, config.p, &config.t_grid)
    })?;
    let tol = &config.tolerances;
    let mut report = RunReport::new(config.clone());
    for (seed, scan) in seeds.iter().zip(&scans) {
        let slope = scan.slope.unwrap_or(f64::NAN);
        let name = format!("seed={seed}/slope");
        if config.profile == SpectralProfile::Singular {
            report.check_within(name, slope, config.p, tol.singular_slope_window)?;
        } else {
            report.check_ge(name, slope, config.p - tol.taylor_slope_margin)?;
        }
        for (i, oracle) in scan.oracle.iter().enumerate() {
            if let Some(fd) = oracle {
                let k = i + 1;
                let value = factorial(k) * scan.deltas[i];
                report.check_le(format!("seed={seed}/k={k}/fd_match"), (value - fd).abs(), tol.fd_bound(*fd))?;
            }
        }
    }
    report.data = Value::Array(
        seeds
            .iter()
            .zip(&scans)
            .map(|(seed, scan)| Ok(json!({ "seed": seed, "report": serde_json::to_value(scan)? })))
            .collect::<Result<Vec<_>>>()?,
    );
    report.stamp(start);
    Ok((report, scans))
}

/// Per-seed Hölder curve `||F(B + tW) - F(B)||_{p'}` for `F(A) = T^{A,B,...,B}_{f~^[m]}(V, ..., V)`.
#[derive(Debug, Clone)]
pub struct HolderCurve {
    pub t: Vec<f64>,
    pub differences: Vec<f64>,
    /// `None` when every difference vanishes.
    pub slope: Option<f64>,
}

pub fn holder_curve(
    b: &HermitianMatrix,
    w: &HermitianMatrix,
    v: &HermitianMatrix,
    p: f64,
    t_grid: &[f64],
    tol: f64,
) -> Result<HolderCurve> {
    let exponent = SchattenExponent::new(p)?;
    let m = exponent.m();
    if m > MAX_TAYLOR_ORDER {
        return Err(Error::Unsupported(format!("Hölder scan needs an order-{} operator integral", m - 1)));
    }
    let f = ScalarFunctionModel::power_abs(p)?;
    let db = b.eigen()?;
    db.check_working_interval()?;
    let symbol = Symbol::TildeDividedDifference { f, order: m };
    let perts = vec![v.matrix().clone(); m - 1];
    let eval = |first: SpectralDecomposition| -> Result<CMatrix> {
        let mut tuple = vec![first];
        tuple.extend(std::iter::repeat_n(db.clone(), m - 1));
        moi_exact(&MoiRequest::new(tuple, perts.clone(), symbol.clone())?.with_tol(tol))
    };
    let base = eval(db.clone())?;
    let mut differences = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let da = b.add_scaled(t, w)?.eigen()?;
        da.check_working_interval()?;
        differences.push(schatten_norm(&(eval(da)? - &base), exponent.dual())?);
    }
    let slope = if differences.iter().all(|d| *d <= HOLDER_FLOOR) {
        None
    } else {
        Some(loglog_slope(t_grid, &differences, HOLDER_FLOOR)?)
    };
    Ok(HolderCurve { t: t_grid.to_vec(), differences, slope })
}

/// Hölder scans from the configured profile (singular by default), `W = w_scale V`.
pub fn run_holder_scan(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let exponent = SchattenExponent::new(config.p)?;
    let alpha = exponent.holder_exponent();
    let seeds = config.seed_list();
    let curves = ordered_map(&seeds, |seed| {
        let (b, v) = generate_instance(seed, config.dim, config.profile)?;
        let w = v.scale(config.w_scale);
        holder_curve(&b, &w, &v, config.p, &config.t_grid, config.tolerances.quadrature)
    })?;
    let mut report = RunReport::new(config.clone());
    let mut data = Vec::new();
    for (seed, curve) in seeds.iter().zip(&curves) {
        let name = format!("seed={seed}/holder_slope");
        match curve.slope {
            Some(s) => report.check_ge(name, s, alpha - config.tolerances.holder_slope_margin)?,
            None => report.check_flag(name, true, Some("degenerate: all differences vanish".into()))?,
        }
        data.push(json!({
            "seed": seed,
            "alpha": alpha,
            "t": curve.t,
            "differences": curve.differences,
            "slope": curve.slope,
            "degenerate": curve.slope.is_none(),
        }));
    }
    report.data = Value::Array(data);
    report.stamp(start);
    Ok(report)
}

/// Binned-versus-exact error curve for one instance, in the Schatten `p`-norm.
pub fn binned_errors(
    h: &HermitianMatrix,
    v: &HermitianMatrix,
    symbol: &Symbol,
    n_grid: &[usize],
    p: f64,
) -> Result<Vec<f64>> {
    let req = MoiRequest::diagonal(&h.eigen()?, vec![v.matrix().clone()], symbol.clone())?;
    let exact = moi_exact(&req)?;
    n_grid.iter().map(|&n| schatten_norm(&(moi_binned(&req, n)? - &exact), p)).collect()
}

/// Convergence of `S_{phi,n}` for `phi = f_p^[1]`, worst case over seeds.
pub fn run_moi_convergence(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let f = ScalarFunctionModel::power_abs(config.p)?;
    let symbol = Symbol::DividedDifference { f, order: 1 };
    let seeds = config.seed_list();
    let per_seed = ordered_map(&seeds, |seed| {
        let (h, v) = generate_instance(seed, config.dim, config.profile)?;
        binned_errors(&h, &v, &symbol, &config.n_grid, config.p)
    })?;
    let worst: Vec<f64> = (0..config.n_grid.len())
        .map(|i| per_seed.iter().map(|e| e[i]).fold(0.0, f64::max))
        .collect();
    let ns: Vec<f64> = config.n_grid.iter().map(|&n| n as f64).collect();
    let tol = &config.tolerances;
    let mut report = RunReport::new(config.clone());
    let rate = if ns.len() >= crate::frechet::MIN_FIT_POINTS { loglog_slope(&ns, &worst, 0.0)? } else { f64::NAN };
    report.check_within("rate", rate, -1.0, tol.binned_rate_window)?;
    let monotone = worst.windows(2).all(|w| w[1] <= w[0]);
    report.check_flag("max_error_nonincreasing", monotone, None)?;

    // Eigenvalues on the grid of a power-of-two bin count are left unchanged.
    let n_exact = 64;
    let mut rng = SeededRng::with_stream(config.seed, 1);
    let diag: Vec<f64> = (0..config.dim).map(|_| (rng.uniform(-64.0, 64.0).floor()) / n_exact as f64).collect();
    let hd = HermitianMatrix::from_real_diagonal(&diag)?;
    let (_, v) = generate_instance(config.seed, config.dim, SpectralProfile::Generic)?;
    let req = MoiRequest::diagonal(&hd.eigen()?, vec![v.matrix().clone()], symbol.clone())?;
    let grid_gap = frobenius(&(moi_binned(&req, n_exact)? - moi_exact(&req)?));
    report.check_le("grid_aligned_exact", grid_gap, 0.0)?;

    let (h, _) = generate_instance(config.seed, config.dim, SpectralProfile::Generic)?;
    let constant = Symbol::closure(2, |_| 2.5);
    let req = MoiRequest::diagonal(&h.eigen()?, vec![v.matrix().clone()], constant)?;
    let mut constant_gap: f64 = 0.0;
    for &n in &config.n_grid {
        let scaled = v.matrix() * crate::spectral::C64::new(2.5, 0.0);
        constant_gap = constant_gap.max(frobenius(&(moi_binned(&req, n)? - scaled)));
    }
    report.check_le("constant_symbol", constant_gap, tol.exact_case)?;

    report.data = json!({
        "n": config.n_grid,
        "max_error": worst,
        "rate": rate,
        "per_seed": seeds.iter().zip(&per_seed).map(|(s, e)| json!({ "seed": s, "error": e })).collect::<Vec<_>>(),
    });
    report.stamp(start);
    Ok(report)
}

/// Kernels exercised by the perturbation check for momentum order `m`.
pub fn perturbation_kernels(p: f64, m: usize) -> Result<Vec<(String, MomentumSpec, bool)>> {
    let poly = ScalarFunctionModel::polynomial(vec![0.2, -0.7, 0.4, 1.1, 0.0, 0.6]);
    let mut tilted = vec![QTerm { alpha: vec![0; m + 1], c: 0.5 }];
    let mut a = vec![0; m + 1];
    a[0] = 1;
    a[m] = 2;
    tilted.push(QTerm { alpha: a, c: 1.5 });
    Ok(vec![
        ("poly".into(), MomentumSpec::unit_q(m, Kernel::Model { f: poly.clone(), order: m })?, true),
        ("poly_q".into(), MomentumSpec::new(m, Kernel::Model { f: poly, order: m }, tilted)?, true),
        (
            "power_abs".into(),
            MomentumSpec::unit_q(m, Kernel::Model { f: ScalarFunctionModel::power_abs(p)?, order: m })?,
            false,
        ),
    ])
}

/// Residual of the perturbation formula on one seed; `(name, residual, scale, polynomial)`.
pub fn perturbation_residuals(seed: u64, dim: usize, p: f64, m: usize, tol: f64) -> Result<Vec<(String, f64, f64, bool)>> {
    let (a, v) = generate_instance(seed, dim, SpectralProfile::Generic)?;
    let (b, _) = aux_instance(seed, 1, dim)?;
    let mut rest = Vec::with_capacity(m);
    let mut perts = vec![v.matrix().clone()];
    for j in 0..m {
        let (h, w) = aux_instance(seed, 2 + j as u64, dim)?;
        rest.push(h.eigen()?);
        if j > 0 {
            perts.push(w.matrix().clone());
        }
    }
    perturbation_kernels(p, m)?
        .into_iter()
        .map(|(name, spec, poly)| {
            let r = perturbation_identity(&spec, &a, &b, &rest, &perts, tol)?;
            Ok((name, r.residual, r.scale, poly))
        })
        .collect()
}

/// Perturbation formula for momentum orders 1 and 2 on every seed.
pub fn run_perturbation_check(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let seeds = config.seed_list();
    let tol = &config.tolerances;
    let rows = ordered_map(&seeds, |seed| {
        let mut out = Vec::new();
        for m in 1..=2 {
            for r in perturbation_residuals(seed, config.dim, config.p, m, tol.quadrature)? {
                out.push((m, r));
            }
        }
        Ok(out)
    })?;
    let mut report = RunReport::new(config.clone());
    let mut data = Vec::new();
    for (seed, row) in seeds.iter().zip(&rows) {
        for (m, (name, residual, scale, poly)) in row {
            let bound = if *poly { tol.perturbation_polynomial } else { tol.perturbation_power_abs } * scale.max(1.0);
            report.check_le(format!("seed={seed}/m={m}/{name}"), *residual, bound)?;
            data.push(json!({ "seed": seed, "m": m, "kernel": name, "residual": residual, "scale": scale }));
        }
    }
    report.data = Value::Array(data);
    report.stamp(start);
    Ok(report)
}

/// Random separable symbol of arity `m + 1` with `terms` terms.
pub fn random_separable(rng: &mut SeededRng, m: usize, terms: usize) -> SeparableSymbol {
    let mut sym = SeparableSymbol::default();
    for _ in 0..terms {
        let weight = rng.normal();
        let factors: Vec<UnaryFn> = (0..=m)
            .map(|_| {
                let (a, b, kind) = (rng.normal(), rng.normal(), rng.next_u64() % 3);
                let f: UnaryFn = match kind {
                    0 => Arc::new(move |x: f64| (a * x + b).cos()),
                    1 => Arc::new(move |x: f64| (0.5 * a * x).exp() + b),
                    _ => Arc::new(move |x: f64| a * x * x + b * x + 1.0),
                };
                f
            })
            .collect();
        sym.push(weight, factors);
    }
    sym
}

/// `||moi_separable - moi_exact||_2` for a random order-`m` separable symbol.
pub fn separable_gap(seed: u64, dim: usize, m: usize) -> Result<f64> {
    let mut rng = SeededRng::with_stream(seed, 2);
    let sym = random_separable(&mut rng, m, 3);
    let mut decomps = Vec::with_capacity(m + 1);
    let mut perts = Vec::with_capacity(m);
    for j in 0..=m {
        let (h, v) = aux_instance(seed, 10 + j as u64, dim)?;
        decomps.push(h.eigen()?);
        if j < m {
            perts.push(v.matrix().clone());
        }
    }
    let direct = moi_separable(&sym, &decomps, &perts)?;
    let exact = moi_exact(&MoiRequest::new(decomps, perts, Symbol::Separable(sym))?)?;
    Ok(frobenius(&(direct - exact)))
}

/// `(lhs, rhs)` of the integral Taylor formula with `H_1 = H + c V`, `||c V||_2 = 0.3`.
pub fn integral_form_sides(seed: u64, dim: usize, p: f64) -> Result<(f64, f64, bool)> {
    let (h0, v) = generate_instance(seed, dim, SpectralProfile::Generic)?;
    let scale = INTEGRAL_SEGMENT / v.schatten_norm(2.0)?;
    let h1 = h0.add_scaled(scale, &v)?;
    let m = SchattenExponent::new(p)?.m();
    let r = taylor_integral_form(&h0, &h1, p, m, 8)?;
    Ok((r.lhs, r.rhs, r.converged))
}

/// `H = diag(0, 1)`, `V = [[0, 1], [1, 0]]`, `f = x^3`, `k = 2`: both sides equal 3.
pub fn exact_trace_case() -> Result<(f64, f64)> {
    let h = HermitianMatrix::from_real_diagonal(&[0.0, 1.0])?;
    let v = HermitianMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])?;
    let form = FrechetForm::with_function(&h, ScalarFunctionModel::Monomial { n: 3 }, 2)?;
    let lhs = form.divided_difference_trace(v.matrix(), 2)?;
    let rhs = crate::spectral::real_trace(form.bracket_complex(&[v.matrix(), v.matrix()])?)?;
    Ok((lhs, rhs))
}

/// Fixed battery of identity checks over `config.p_values` and every seed.
pub fn run_selftest(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    for &p in &config.p_values {
        let m = SchattenExponent::new(p)?.m();
        if m > MAX_TAYLOR_ORDER {
            return Err(Error::Unsupported(format!(
                "p = {p} needs Taylor order {m}; operator integrals are limited to order {MAX_MOI_ORDER}"
            )));
        }
    }
    let tol = config.tolerances.clone();
    let d = config.dim;
    let seeds = config.seed_list();
    let mut jobs = Vec::new();
    for &p in &config.p_values {
        for &s in &seeds {
            jobs.push((p, s));
        }
    }
    let idx: Vec<u64> = (0..jobs.len() as u64).collect();
    let results = ordered_map(&idx, |i| {
        let (p, seed) = jobs[i as usize];
        let m = SchattenExponent::new(p)?.m();
        let f = ScalarFunctionModel::power_abs(p)?;
        let mut checks: Vec<(String, f64, f64)> = Vec::new();

        let spec = MomentumSpec::unit_q(1, Kernel::Model { f: f.clone(), order: 1 })?;
        let (a, v) = generate_instance(seed, d, SpectralProfile::Generic)?;
        let (b, _) = aux_instance(seed, 1, d)?;
        let (c, _) = aux_instance(seed, 2, d)?;
        let r = perturbation_identity(&spec, &a, &b, &[c.eigen()?], &[v.matrix().clone()], tol.quadrature)?;
        checks.push(("perturbation_identity".into(), r.residual, tol.perturbation_power_abs * r.scale.max(1.0)));

        let da = a.eigen()?;
        let req = MoiRequest::new(
            vec![da.clone(), b.eigen()?, c.eigen()?],
            vec![v.matrix().clone(), b.matrix().clone()],
            Symbol::DividedDifference { f: f.clone(), order: 2 },
        )?
        .with_tol(tol.quadrature);
        let (lhs, rhs) = algebraic_shift(&req, &[1, 0, 2])?;
        checks.push(("algebraic_shift".into(), frobenius(&(&lhs - &rhs)), tol.algebraic_shift * frobenius(&lhs).max(1.0)));

        let form = FrechetForm::new(&a, p)?.with_tol(tol.quadrature);
        for k in 2..=m {
            checks.push((format!("trace_identity/k={k}"), trace_identity_residual(&form, &v, k)?, tol.trace_identity));
        }

        checks.push(("separable".into(), separable_gap(seed, d, 2)?, tol.separable));

        let (lhs, rhs, converged) = integral_form_sides(seed, d, p)?;
        let gap = if converged { (lhs - rhs).abs() } else { f64::NAN };
        checks.push(("integral_form".into(), gap, tol.integral_form));
        Ok(checks)
    })?;

    let mut report = RunReport::new(config.clone());
    let (lhs, rhs) = exact_trace_case()?;
    report.check_le("exact_case/lhs", (lhs - 3.0).abs(), tol.exact_case)?;
    report.check_le("exact_case/rhs", (rhs - 3.0).abs(), tol.exact_case)?;
    for ((p, seed), checks) in jobs.iter().zip(results) {
        for (name, value, bound) in checks {
            report.check_le(format!("p={p}/seed={seed}/{name}"), value, bound)?;
        }
    }
    report.data = json!({ "p_values": config.p_values, "seeds": seeds, "dim": d });
    report.stamp(start);
    Ok(report)
}
