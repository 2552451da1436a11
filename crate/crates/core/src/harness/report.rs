//! Run reports.

use web_time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::frechet::Timestamp;
use crate::harness::config::ExperimentConfig;

/// One named assertion. `value` is `null` in JSON when it is not a number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Mode-specific curves and values.
    pub data: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<Timestamp>,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        Self { config, passed: true, checks: Vec::new(), data: Value::Null, timestamp: None }
    }

    fn push(&mut self, check: Check) -> Result<()> {
        if self.checks.iter().any(|c| c.name == check.name) {
            return Err(Error::Precondition(format!("check {:?} declared twice", check.name)));
        }
        self.passed &= check.passed;
        self.checks.push(check);
        Ok(())
    }

    /// `value <= bound` (a NaN value fails).
    pub fn check_le(&mut self, name: impl Into<String>, value: f64, bound: f64) -> Result<()> {
        self.push(Check { name: name.into(), value, bound, passed: value <= bound, note: None })
    }

    /// `value >= bound` (a NaN value fails).
    pub fn check_ge(&mut self, name: impl Into<String>, value: f64, bound: f64) -> Result<()> {
        self.push(Check { name: name.into(), value, bound, passed: value >= bound, note: None })
    }

    /// `|value - center| <= window`; the stored bound is `window`.
    pub fn check_within(&mut self, name: impl Into<String>, value: f64, center: f64, window: f64) -> Result<()> {
        let passed = (value - center).abs() <= window;
        let note = Some(format!("center {center}"));
        self.push(Check { name: name.into(), value, bound: window, passed, note })
    }

    pub fn check_flag(&mut self, name: impl Into<String>, passed: bool, note: Option<String>) -> Result<()> {
        let value = if passed { 1.0 } else { 0.0 };
        self.push(Check { name: name.into(), value, bound: 1.0, passed, note })
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn stamp(&mut self, start: Instant) {
        self.timestamp = Some(Timestamp::since(start));
    }

    pub fn to_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with every `timestamp` field removed, for byte comparison.
    pub fn to_comparable_json(&self) -> Result<String> {
        let mut v = self.to_value()?;
        strip_timestamps(&mut v);
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// `name,value,bound,passed` rows.
    pub fn checks_csv(&self) -> Result<String> {
        let err = |e: csv::Error| Error::Parse(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "value", "bound", "passed"]).map_err(err)?;
        for c in &self.checks {
            w.write_record([c.name.clone(), c.value.to_string(), c.bound.to_string(), c.passed.to_string()])
                .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Remove every object key named `timestamp`, recursively.
pub fn strip_timestamps(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timestamp");
            map.values_mut().for_each(strip_timestamps);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}
