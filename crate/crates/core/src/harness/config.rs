//! Experiment configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::instance::SpectralProfile;
use crate::harness::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Derivative,
    TaylorScan,
    MoiConvergence,
    HolderScan,
    PerturbationCheck,
    Selftest,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Derivative,
        Mode::TaylorScan,
        Mode::MoiConvergence,
        Mode::HolderScan,
        Mode::PerturbationCheck,
        Mode::Selftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Derivative => "derivative",
            Mode::TaylorScan => "taylor-scan",
            Mode::MoiConvergence => "moi-convergence",
            Mode::HolderScan => "holder-scan",
            Mode::PerturbationCheck => "perturbation-check",
            Mode::Selftest => "selftest",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode {s:?}")))
    }
}

/// `n` points spaced evenly in `log10` from `hi` down to `lo`.
pub fn logspace_desc(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.log10(), lo.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

pub fn default_t_grid() -> Vec<f64> {
    logspace_desc(1e-1, 1e-4, 13)
}

pub fn default_holder_grid() -> Vec<f64> {
    logspace_desc(1e-1, 1e-5, 9)
}

pub fn default_n_grid() -> Vec<usize> {
    (5..=9).map(|k| 1usize << k).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// First seed; multi-seed modes use `seed, seed + 1, ..., seed + seeds - 1`.
    pub seed: u64,
    pub seeds: u64,
    pub dim: usize,
    pub p: f64,
    /// Derivative order; `None` means every order `1..=m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Exponents swept by the self-test battery.
    pub p_values: Vec<f64>,
    pub profile: SpectralProfile,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub t_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    /// Multiplier of the direction `W` in Hölder scans.
    pub w_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    /// Defaults for `mode`.
    pub fn new(mode: Mode) -> Self {
        let (seeds, dim, p, profile, t_grid) = match mode {
            Mode::Derivative => (1, 4, 2.5, SpectralProfile::Generic, default_t_grid()),
            Mode::TaylorScan => (1, 4, 2.5, SpectralProfile::Generic, default_t_grid()),
            Mode::MoiConvergence => (10, 6, 2.5, SpectralProfile::Generic, default_t_grid()),
            Mode::HolderScan => (1, 4, 2.5, SpectralProfile::Singular, default_holder_grid()),
            Mode::PerturbationCheck => (20, 4, 3.5, SpectralProfile::Generic, default_t_grid()),
            Mode::Selftest => (10, 4, 2.5, SpectralProfile::Generic, default_t_grid()),
        };
        Self {
            mode,
            seed: 1,
            seeds,
            dim,
            p,
            order: None,
            p_values: vec![2.5, 3.5],
            profile,
            tolerances: Tolerances::default(),
            t_grid,
            n_grid: default_n_grid(),
            w_scale: 1.0,
            input: None,
            output: None,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=64).contains(&self.dim) {
            return Err(Error::OutOfRange(format!("dim = {} not in [2, 64]", self.dim)));
        }
        for &p in std::iter::once(&self.p).chain(&self.p_values) {
            if !(p > 1.0 && p <= 8.0) {
                return Err(Error::OutOfRange(format!("p = {p} not in (1, 8]")));
            }
        }
        if self.order == Some(0) {
            return Err(Error::OutOfRange("derivative order must be at least 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::OutOfRange("at least one seed is required".into()));
        }
        if self.t_grid.is_empty() || self.n_grid.is_empty() || self.p_values.is_empty() {
            return Err(Error::OutOfRange("grids must be nonempty".into()));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::OutOfRange("t-grid entries must be positive".into()));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::OutOfRange("n-grid entries must be positive".into()));
        }
        if !self.w_scale.is_finite() {
            return Err(Error::OutOfRange("w_scale must be finite".into()));
        }
        self.tolerances.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let t = default_t_grid();
        assert_eq!(t.len(), 13);
        assert!((t[0] - 1e-1).abs() < 1e-15 && (t[12] - 1e-4).abs() < 1e-18);
        assert!((t[4] - 1e-2).abs() < 1e-15);
        assert_eq!(default_n_grid(), vec![32, 64, 128, 256, 512]);
    }

    #[test]
    fn validation() {
        for mode in Mode::ALL {
            let c = ExperimentConfig::new(mode);
            c.validate().unwrap();
            assert_eq!(c.mode.name().parse::<Mode>().unwrap(), mode);
        }
        let mut c = ExperimentConfig::new(Mode::TaylorScan);
        c.dim = 65;
        assert!(c.validate().is_err());
        c.dim = 4;
        c.p = 8.5;
        assert!(c.validate().is_err());
        c.p = 8.0;
        c.validate().unwrap();
        c.t_grid.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::new(Mode::HolderScan);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"holder-scan\""));
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
