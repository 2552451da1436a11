//! WebAssembly bindings for the static demo page in `www/`. Each export runs one
//! experiment on a seeded instance and returns its report as JSON.

use schatten_core::harness::experiments::run;
use schatten_core::harness::{ExperimentConfig, Mode, SpectralProfile};
use wasm_bindgen::prelude::*;

/// Largest dimension offered by the page; keeps every scan interactive.
pub const MAX_DEMO_DIM: usize = 8;

fn configure(mode: Mode, p: f64, dim: usize, seed: u64, profile: &str) -> Result<ExperimentConfig, String> {
    if dim > MAX_DEMO_DIM {
        return Err(format!("dim = {dim} exceeds the demo limit {MAX_DEMO_DIM}"));
    }
    let mut config = ExperimentConfig::new(mode);
    config.p = p;
    config.dim = dim;
    config.seed = seed;
    config.seeds = 1;
    config.profile = profile.parse::<SpectralProfile>().map_err(|e| e.to_string())?;
    Ok(config)
}

fn report_json(config: &ExperimentConfig) -> Result<String, String> {
    let report = run(config).map_err(|e| e.to_string())?;
    report.to_json().map_err(|e| e.to_string())
}

/// Remainder `|N(H + tV) - Taylor_m(t)|` over the default `t` grid.
pub fn taylor_scan_json(p: f64, dim: usize, seed: u64, profile: &str) -> Result<String, String> {
    report_json(&configure(Mode::TaylorScan, p, dim, seed, profile)?)
}

/// Binned operator integral error against `n`.
pub fn binned_convergence_json(p: f64, dim: usize, seed: u64) -> Result<String, String> {
    report_json(&configure(Mode::MoiConvergence, p, dim, seed, "generic")?)
}

/// Hölder differences against `t` with `W = w_scale V`.
pub fn holder_scan_json(p: f64, dim: usize, seed: u64, profile: &str, w_scale: f64) -> Result<String, String> {
    let mut config = configure(Mode::HolderScan, p, dim, seed, profile)?;
    config.w_scale = w_scale;
    report_json(&config)
}

#[wasm_bindgen]
pub fn taylor_scan(p: f64, dim: usize, seed: u32, profile: &str) -> Result<String, JsError> {
    taylor_scan_json(p, dim, seed.into(), profile).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn binned_convergence(p: f64, dim: usize, seed: u32) -> Result<String, JsError> {
    binned_convergence_json(p, dim, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn holder_scan(p: f64, dim: usize, seed: u32, profile: &str, w_scale: f64) -> Result<String, JsError> {
    holder_scan_json(p, dim, seed.into(), profile, w_scale).map_err(|e| JsError::new(&e))
}
