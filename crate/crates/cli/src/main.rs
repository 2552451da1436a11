//! `schatten`: run experiments and write reports.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on invalid
//! input or any other error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use schatten_core::harness::experiments::{run, run_derivative, taylor_scan_with_reports};
use schatten_core::harness::{ExperimentConfig, Mode, RunReport, SpectralProfile, Tolerances};
use schatten_core::frechet::TaylorReport;
use schatten_core::{Error, HermitianMatrix, Result};

#[derive(Parser, Debug)]
#[command(name = "schatten", version, about = "Taylor expansions of Schatten p-norms: experiments and checks")]
struct Cli {
    /// Quadrature tolerance for simplex momenta.
    #[arg(long, global = true)]
    tol_quad: Option<f64>,
    /// JSON file overriding any subset of the default tolerances.
    #[arg(long, global = true)]
    tolerances: Option<PathBuf>,
    /// Directory for report files; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// generic, singular, clustered or gapped.
    #[arg(long)]
    profile: Option<SpectralProfile>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// k! delta^(k) at a given matrix, or a seeded battery against finite differences.
    Derivative {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        order: Option<usize>,
        /// Matrix JSON for H; without it seeded instances are used.
        #[arg(long, requires = "dir")]
        matrix: Option<PathBuf>,
        /// Matrix JSON for each direction; a single one is repeated.
        #[arg(long, num_args = 1..)]
        dir: Vec<PathBuf>,
    },
    /// Remainder of the Taylor polynomial against t.
    TaylorScan {
        #[command(flatten)]
        common: Common,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
    },
    /// Binned multiple operator integrals against the exact one.
    MoiConvergence {
        #[command(flatten)]
        common: Common,
        /// Comma-separated bin counts.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
    },
    /// Empirical Hölder exponent of the top-order operator integral.
    HolderScan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
        /// Multiplier of the direction W.
        #[arg(long)]
        w_scale: Option<f64>,
    },
    /// Perturbation formula for momenta of orders 1 and 2.
    PerturbationCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Every identity check on a seed battery.
    Selftest {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents.
        #[arg(long, value_delimiter = ',')]
        p_values: Option<Vec<f64>>,
    },
}

fn apply_common(config: &mut ExperimentConfig, c: &Common) {
    if let Some(v) = c.seed {
        config.seed = v;
    }
    if let Some(v) = c.seeds {
        config.seeds = v;
    }
    if let Some(v) = c.dim {
        config.dim = v;
    }
    if let Some(v) = c.p {
        config.p = v;
    }
    if let Some(v) = c.profile {
        config.profile = v;
    }
}

fn read_matrix(path: &Path) -> Result<HermitianMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    HermitianMatrix::from_json(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn tolerances(cli: &Cli) -> Result<Tolerances> {
    let mut t = match &cli.tolerances {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            Tolerances::from_json(&text)?
        }
        None => Tolerances::default(),
    };
    if let Some(q) = cli.tol_quad {
        t.quadrature = q;
    }
    t.validate()?;
    Ok(t)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| Error::Parse(format!("SF_THREADS={raw:?} is not a count")))?;
    if n == 0 {
        return Err(Error::OutOfRange("SF_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Precondition(e.to_string()))
}

fn render(report: &RunReport, format: Format) -> Result<String> {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => report.checks_csv(),
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn emit(cli: &Cli, report: &RunReport, taylor: &[TaylorReport]) -> Result<()> {
    let text = render(report, cli.format)?;
    let Some(dir) = &cli.out else {
        println!("{text}");
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(|e| Error::Parse(format!("{}: {e}", dir.display())))?;
    let ext = match cli.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    write_file(dir, &format!("{}.{ext}", report.config.mode), &text)?;
    for (seed, scan) in report.config.seed_list().iter().zip(taylor) {
        write_file(dir, &format!("taylor_seed{seed}.json"), &scan.to_json()?)?;
        write_file(dir, &format!("taylor_seed{seed}.csv"), &scan.to_csv()?)?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<RunReport> {
    configure_threads()?;
    let tol = tolerances(cli)?;
    let (mode, common) = match &cli.command {
        Command::Derivative { common, .. } => (Mode::Derivative, common),
        Command::TaylorScan { common, .. } => (Mode::TaylorScan, common),
        Command::MoiConvergence { common, .. } => (Mode::MoiConvergence, common),
        Command::HolderScan { common, .. } => (Mode::HolderScan, common),
        Command::PerturbationCheck { common } => (Mode::PerturbationCheck, common),
        Command::Selftest { common, .. } => (Mode::Selftest, common),
    };
    let mut config = ExperimentConfig::new(mode);
    config.tolerances = tol;
    apply_common(&mut config, common);
    config.output = cli.out.as_ref().map(|p| p.display().to_string());
    let mut taylor = Vec::new();
    let report = match &cli.command {
        Command::Derivative { order, matrix, dir, .. } => {
            config.order = *order;
            match matrix {
                Some(path) => {
                    config.input = Some(path.display().to_string());
                    let h = read_matrix(path)?;
                    let dirs = dir.iter().map(|d| read_matrix(d)).collect::<Result<Vec<_>>>()?;
                    run_derivative(&config, &h, &dirs)?
                }
                None => run(&config)?,
            }
        }
        Command::TaylorScan { t_grid, .. } => {
            if let Some(t) = t_grid {
                config.t_grid = t.clone();
            }
            let (report, scans) = taylor_scan_with_reports(&config)?;
            taylor = scans;
            report
        }
        Command::MoiConvergence { n_grid, .. } => {
            if let Some(n) = n_grid {
                config.n_grid = n.clone();
            }
            run(&config)?
        }
        Command::HolderScan { t_grid, w_scale, .. } => {
            if let Some(t) = t_grid {
                config.t_grid = t.clone();
            }
            if let Some(w) = w_scale {
                config.w_scale = *w;
            }
            run(&config)?
        }
        Command::PerturbationCheck { .. } => run(&config)?,
        Command::Selftest { p_values, .. } => {
            if let Some(ps) = p_values {
                config.p_values = ps.clone();
            }
            run(&config)?
        }
    };
    emit(cli, &report, &taylor)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) if report.passed => {
            eprintln!("{}: {} checks passed", report.config.mode, report.checks.len());
            ExitCode::SUCCESS
        }
        Ok(report) => {
            for c in report.failed() {
                eprintln!("FAILED {}: value {} bound {}", c.name, c.value, c.bound);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
