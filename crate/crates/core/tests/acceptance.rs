//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use schatten_core::frechet::{delta_symmetric, permutations, trace_identity_residual, FrechetForm};
use schatten_core::harness::config::{ExperimentConfig, Mode};
use schatten_core::harness::experiments::{
    exact_trace_case, integral_form_sides, run_derivative_battery, run_holder_scan, run_moi_convergence,
    run_perturbation_check, run_taylor_scan, separable_gap,
};
use schatten_core::harness::instance::{generate_instance, SpectralProfile};
use schatten_core::harness::rng::SeededRng;
use schatten_core::harness::tolerances::Tolerances;
use schatten_core::harness::RunReport;
use schatten_core::scalar::divdiff::divided_difference_via_momentum;
use schatten_core::{HermitianMatrix, ScalarFunctionModel, C64};
use twofloat::TwoFloat;

struct Outcome {
    passed: bool,
    detail: String,
}

fn from_reports(reports: &[RunReport]) -> Outcome {
    let total: usize = reports.iter().map(|r| r.checks.len()).sum();
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failed().map(move |c| format!("p={} {} = {:e} (bound {:e})", r.config.p, c.name, c.value, c.bound)))
        .collect();
    let passed = failed.is_empty() && total > 0;
    let mut detail = format!("{} checks, {} failed", total, failed.len());
    for f in failed.iter().take(5) {
        detail.push_str("; ");
        detail.push_str(f);
    }
    Outcome { passed, detail }
}

fn with_runtime(outcome: Outcome, start: Instant, limit_s: Option<f64>) -> Outcome {
    let elapsed = start.elapsed().as_secs_f64();
    match limit_s {
        Some(limit) => Outcome {
            passed: outcome.passed && elapsed < limit,
            detail: format!("{}; {:.1}s (limit {}s)", outcome.detail, elapsed, limit),
        },
        None => Outcome { passed: outcome.passed, detail: format!("{}; {:.1}s", outcome.detail, elapsed) },
    }
}

fn seeds(cfg: &mut ExperimentConfig, first: u64, count: u64) {
    cfg.seed = first;
    cfg.seeds = count;
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut reports = Vec::new();
    for p in [2.5, 3.5] {
        for dim in 2..=6 {
            let mut cfg = ExperimentConfig::new(Mode::Derivative);
            cfg.p = p;
            cfg.dim = dim;
            cfg.profile = SpectralProfile::Gapped;
            seeds(&mut cfg, 1, 20);
            match run_derivative_battery(&cfg) {
                Ok(r) => reports.push(r),
                Err(e) => return Outcome { passed: false, detail: format!("p={p} d={dim}: {e}") },
            }
        }
    }
    with_runtime(from_reports(&reports), start, Some(60.0))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut reports = Vec::new();
    for profile in [SpectralProfile::Singular, SpectralProfile::Generic] {
        for p in [1.5, 2.5, 3.5] {
            let mut cfg = ExperimentConfig::new(Mode::TaylorScan);
            cfg.p = p;
            cfg.profile = profile;
            seeds(&mut cfg, 1, 10);
            match run_taylor_scan(&cfg) {
                Ok(r) => reports.push(r),
                Err(e) => return Outcome { passed: false, detail: format!("{profile} p={p}: {e}") },
            }
        }
    }
    with_runtime(from_reports(&reports), start, Some(30.0))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(Mode::PerturbationCheck);
    seeds(&mut cfg, 1, 20);
    match run_perturbation_check(&cfg) {
        Ok(r) => with_runtime(from_reports(&[r]), start, None),
        Err(e) => Outcome { passed: false, detail: e.to_string() },
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for seed in 1..=20 {
        let (h, v) = generate_instance(seed, 4, SpectralProfile::Generic).unwrap();
        let form = FrechetForm::new(&h, 3.5).unwrap();
        for k in [2, 3] {
            match trace_identity_residual(&form, &v, k) {
                Ok(r) => worst = worst.max(r),
                Err(e) => return Outcome { passed: false, detail: format!("seed {seed} k={k}: {e}") },
            }
            count += 1;
        }
    }
    let (lhs, rhs) = exact_trace_case().unwrap();
    let exact = (lhs - 3.0).abs().max((rhs - 3.0).abs());
    let passed = worst <= tol.trace_identity && exact <= tol.exact_case;
    let detail = format!(
        "{count} residuals, max {worst:.2e} (bound {:.0e}); diag(0,1) case lhs {lhs}, rhs {rhs}",
        tol.trace_identity
    );
    with_runtime(Outcome { passed, detail }, start, None)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let mut worst: f64 = 0.0;
    for p in [2.5, 3.5] {
        for seed in 1..=10 {
            match integral_form_sides(seed, 3, p) {
                Ok((lhs, rhs, converged)) => {
                    let gap = if converged { (lhs - rhs).abs() } else { f64::INFINITY };
                    worst = worst.max(gap);
                }
                Err(e) => return Outcome { passed: false, detail: format!("p={p} seed {seed}: {e}") },
            }
        }
    }
    let passed = worst <= tol.integral_form;
    with_runtime(Outcome { passed, detail: format!("20 cases, max |lhs - rhs| {worst:.2e}") }, start, None)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::new(Mode::MoiConvergence);
    match run_moi_convergence(&cfg) {
        Ok(r) => {
            let rate = r.data["rate"].as_f64().unwrap_or(f64::NAN);
            let mut o = from_reports(&[r]);
            o.detail = format!("rate {rate:.3}; {}", o.detail);
            with_runtime(o, start, None)
        }
        Err(e) => Outcome { passed: false, detail: e.to_string() },
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut reports = Vec::new();
    for p in [2.5, 3.0, 3.5] {
        let mut cfg = ExperimentConfig::new(Mode::HolderScan);
        cfg.p = p;
        seeds(&mut cfg, 1, 10);
        match run_holder_scan(&cfg) {
            Ok(r) => reports.push(r),
            Err(e) => return Outcome { passed: false, detail: format!("p={p}: {e}") },
        }
    }
    let min_margin = reports
        .iter()
        .flat_map(|r| r.checks.iter().map(|c| c.value - c.bound))
        .fold(f64::INFINITY, f64::min);
    let mut o = from_reports(&reports);
    o.detail = format!("min slope - bound {min_margin:.3}; {}", o.detail);
    with_runtime(o, start, None)
}

/// `f(x)` in double-double; powers with half-integer `p` only.
fn eval_extended(f: &ScalarFunctionModel, x: f64) -> TwoFloat {
    let t = TwoFloat::from(x);
    match f {
        ScalarFunctionModel::PowerAbs { p } => {
            assert_eq!((2.0 * p).fract(), 0.0);
            let a = t.abs();
            let root = if p.fract() == 0.5 { a.sqrt() } else { TwoFloat::from(1.0) };
            a.powi(p.floor() as i32) * root
        }
        ScalarFunctionModel::Polynomial { coeffs } => {
            coeffs.iter().rev().fold(TwoFloat::from(0.0), |acc, &c| acc * t + c)
        }
        other => panic!("no extended evaluation for {other:?}"),
    }
}

/// Recursive divided difference over distinct nodes in double-double, so that
/// clusters at gap 1e-6 keep enough digits to serve as a reference.
fn recursive_extended(f: &ScalarFunctionModel, nodes: &[f64]) -> f64 {
    let mut x = nodes.to_vec();
    x.sort_by(f64::total_cmp);
    let k = x.len() - 1;
    let mut table: Vec<TwoFloat> = x.iter().map(|&v| eval_extended(f, v)).collect();
    for level in 1..=k {
        for i in 0..=(k - level) {
            table[i] = (table[i + 1] - table[i]) / (TwoFloat::from(x[i + level]) - x[i]);
        }
    }
    table[0].into()
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let dd_bound = 10.0 * tol.quadrature;
    let mut rng = SeededRng::new(8);
    let models = [
        ScalarFunctionModel::power_abs(3.5).unwrap(),
        ScalarFunctionModel::power_abs(2.5).unwrap(),
        ScalarFunctionModel::polynomial(vec![0.3, -1.0, 0.5, 2.0, 0.0, -0.4]),
    ];
    let mut dd_worst: f64 = 0.0;
    let mut dd_count = 0;
    for f in &models {
        let max_k = match f {
            ScalarFunctionModel::PowerAbs { p } => (p.ceil() as usize - 1).min(3),
            _ => 3,
        };
        for _ in 0..20 {
            for k in 1..=max_k {
                let mut nodes: Vec<f64> = (0..=k).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let mut clustered = nodes.clone();
                clustered[1] = clustered[0] + 1e-6;
                for xs in [&mut nodes, &mut clustered] {
                    let r = recursive_extended(f, xs);
                    match divided_difference_via_momentum(f, xs, tol.quadrature) {
                        Ok(q) => dd_worst = dd_worst.max((r - q).abs()),
                        Err(e) => return Outcome { passed: false, detail: format!("{f:?} {xs:?}: {e}") },
                    }
                    dd_count += 1;
                }
            }
        }
    }
    let mut sep_worst: f64 = 0.0;
    for seed in 1..=50 {
        let m = 1 + (seed as usize % 3);
        match separable_gap(seed, 5, m) {
            Ok(g) => sep_worst = sep_worst.max(g),
            Err(e) => return Outcome { passed: false, detail: format!("separable seed {seed}: {e}") },
        }
    }
    let passed = dd_worst <= dd_bound && sep_worst <= tol.separable;
    let detail = format!(
        "{dd_count} divided differences, max gap {dd_worst:.2e} (bound {dd_bound:.0e}); 50 separable MOIs, max gap {sep_worst:.2e} (bound {:.0e})",
        tol.separable
    );
    with_runtime(Outcome { passed, detail }, start, None)
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let mut sym_worst: f64 = 0.0;
    let mut lin_worst: f64 = 0.0;
    for seed in 1..=10 {
        let (h, _) = generate_instance(seed, 4, SpectralProfile::Generic).unwrap();
        let form = FrechetForm::new(&h, 3.5).unwrap();
        let dirs: Vec<HermitianMatrix> =
            (0..4).map(|j| generate_instance(seed ^ ((j + 1) << 40), 4, SpectralProfile::Generic).unwrap().1).collect();
        for k in [2, 3] {
            let args = &dirs[..k];
            let base = delta_symmetric(&form, args).unwrap();
            for perm in permutations(k) {
                let permuted: Vec<HermitianMatrix> = perm.iter().map(|&i| args[i].clone()).collect();
                sym_worst = sym_worst.max((delta_symmetric(&form, &permuted).unwrap() - base).abs());
            }
            let (a, b) = (0.7, -1.3);
            for slot in 0..k {
                let mut combined = args.to_vec();
                combined[slot] = HermitianMatrix::new(args[slot].matrix() * C64::new(a, 0.0)
                    + dirs[3].matrix() * C64::new(b, 0.0))
                .unwrap();
                let mut other = args.to_vec();
                other[slot] = dirs[3].clone();
                let lhs = delta_symmetric(&form, &combined).unwrap();
                let rhs = a * base + b * delta_symmetric(&form, &other).unwrap();
                lin_worst = lin_worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
            }
        }
    }
    let passed = sym_worst <= tol.symmetry && lin_worst <= tol.linearity;
    let detail = format!(
        "permutation gap {sym_worst:.2e} (bound {:.0e}); relative linearity gap {lin_worst:.2e} (bound {:.0e})",
        tol.symmetry, tol.linearity
    );
    with_runtime(Outcome { passed, detail }, start, None)
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut configs = Vec::new();
    let mut taylor = ExperimentConfig::new(Mode::TaylorScan);
    seeds(&mut taylor, 3, 3);
    configs.push(taylor);
    let mut holder = ExperimentConfig::new(Mode::HolderScan);
    seeds(&mut holder, 3, 3);
    configs.push(holder);
    let mut conv = ExperimentConfig::new(Mode::MoiConvergence);
    seeds(&mut conv, 3, 4);
    configs.push(conv);
    let mut pert = ExperimentConfig::new(Mode::PerturbationCheck);
    seeds(&mut pert, 3, 2);
    configs.push(pert);
    for cfg in &configs {
        let a = schatten_core::harness::run(cfg).and_then(|r| r.to_comparable_json());
        let b = schatten_core::harness::run(cfg).and_then(|r| r.to_comparable_json());
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => return Outcome { passed: false, detail: format!("{} reports differ", cfg.mode) },
            (a, b) => return Outcome { passed: false, detail: format!("{}: {:?} {:?}", cfg.mode, a.err(), b.err()) },
        }
    }
    for profile in [SpectralProfile::Generic, SpectralProfile::Singular, SpectralProfile::Clustered, SpectralProfile::Gapped] {
        let x = generate_instance(11, 6, profile).unwrap();
        let y = generate_instance(11, 6, profile).unwrap();
        if x.0.to_json() != y.0.to_json() || x.1.to_json() != y.1.to_json() {
            return Outcome { passed: false, detail: format!("{profile} instances differ") };
        }
    }
    let detail = format!("{} modes and 4 profiles byte-identical", configs.len());
    with_runtime(Outcome { passed: true, detail }, start, None)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle derivative match", criterion_1),
        ("remainder order", criterion_2),
        ("perturbation identity", criterion_3),
        ("trace identity", criterion_4),
        ("integral Taylor formula", criterion_5),
        ("binned MOI convergence", criterion_6),
        ("Hölder exponent", criterion_7),
        ("cross-oracles", criterion_8),
        ("symmetry and multilinearity", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut all = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        all &= o.passed;
        println!("criterion {:>2} {:<28} {}  {}", i + 1, name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
