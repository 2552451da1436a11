//! Default tolerances for every experiment check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Accuracy requested from simplex quadrature.
    pub quadrature: f64,
    /// Relative part of the finite-difference match `max(rel |x|, abs)`.
    pub fd_relative: f64,
    /// Absolute part of the finite-difference match.
    pub fd_absolute: f64,
    /// Slope deficit allowed below `p` for remainder scans.
    pub taylor_slope_margin: f64,
    /// Two-sided slope window around `p` for the singular profile.
    pub singular_slope_window: f64,
    /// Slope deficit allowed below `p - m` for Hölder scans.
    pub holder_slope_margin: f64,
    /// Fitted binned-convergence rate must lie in `-1 +- this`.
    pub binned_rate_window: f64,
    pub perturbation_polynomial: f64,
    pub perturbation_power_abs: f64,
    pub trace_identity: f64,
    pub integral_form: f64,
    pub separable: f64,
    pub algebraic_shift: f64,
    pub symmetry: f64,
    pub linearity: f64,
    pub exact_case: f64,
}

/// Default values, kept in one file at the crate root.
pub const DEFAULT_TOLERANCES_JSON: &str = include_str!("../../tolerances.json");

impl Default for Tolerances {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TOLERANCES_JSON).expect("embedded tolerances parse")
    }
}

impl Tolerances {
    /// Defaults overridden by the keys present in `text`.
    pub fn from_json(text: &str) -> Result<Self> {
        let overrides: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut merged = serde_json::to_value(Self::default())?;
        if let serde_json::Value::Object(map) = &mut merged {
            map.extend(overrides);
        }
        let t: Self = serde_json::from_value(merged)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let values = serde_json::to_value(self)?;
        for (name, v) in values.as_object().into_iter().flatten() {
            match v.as_f64() {
                Some(x) if x.is_finite() && x > 0.0 => {}
                _ => return Err(Error::OutOfRange(format!("tolerance {name} must be positive and finite"))),
            }
        }
        Ok(())
    }

    /// `|a - b| <= max(fd_relative |b|, fd_absolute)`.
    pub fn fd_bound(&self, reference: f64) -> f64 {
        (self.fd_relative * reference.abs()).max(self.fd_absolute)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let t = Tolerances::from_json(r#"{"quadrature": 1e-8}"#).unwrap();
        assert_eq!(t.quadrature, 1e-8);
        assert_eq!(t.trace_identity, Tolerances::default().trace_identity);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(Tolerances::from_json(r#"{"separable": 0.0}"#).is_err());
        assert!(Tolerances::from_json(r#"{"separable": -1}"#).is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(Tolerances::from_json(r#"{"quadrature_tol": 1e-8}"#).is_err());
    }

    #[test]
    fn fd_bound_switches_at_five() {
        let t = Tolerances::default();
        assert_eq!(t.fd_bound(1.0), 5e-5);
        assert!((t.fd_bound(100.0) - 1e-3).abs() < 1e-15);
    }
}
