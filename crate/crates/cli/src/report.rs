//! Run report: checks, config echo and artifact list, printed and saved as JSON.

use std::fmt;
use std::path::PathBuf;

use schrodinger_bridge::gallery::{Bound, Check, OrderCheck, SuiteReport, SECOND_ORDER_BAND};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance band, e.g. `<= 1e-6`.
    pub bound: String,
    pub passed: bool,
}

impl From<&Check<f64>> for CheckRecord {
    fn from(c: &Check<f64>) -> Self {
        Self {
            name: c.name.clone(),
            value: c.value,
            bound: c.bound.to_string(),
            passed: c.passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub pipeline: String,
    pub passed: bool,
    pub checks: Vec<CheckRecord>,
    /// Extra measured values that carry no pass/fail verdict.
    pub notes: Vec<(String, f64)>,
    pub artifacts: Vec<PathBuf>,
    pub config: ScenarioConfig,
}

impl RunReport {
    pub fn new(pipeline: &str, config: &ScenarioConfig) -> Self {
        Self {
            pipeline: pipeline.to_string(),
            passed: true,
            checks: Vec::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn push(&mut self, check: Check<f64>) {
        self.passed &= check.passed;
        self.checks.push(CheckRecord::from(&check));
    }

    pub fn below(&mut self, name: &str, value: f64, limit: f64) {
        self.push(Check::new(name, value, Bound::Below(limit)));
    }

    /// Coarse/fine residual ratio against the second-order band.
    pub fn second_order(&mut self, name: &str, order: OrderCheck<f64>) {
        self.note(&format!("{name} (coarse)"), order.coarse);
        self.note(&format!("{name} (fine)"), order.fine);
        let (lo, hi) = SECOND_ORDER_BAND;
        self.push(Check::new(name, order.ratio(), Bound::Between(lo, hi)));
    }

    pub fn note(&mut self, name: &str, value: f64) {
        self.notes.push((name.to_string(), value));
    }

    pub fn extend_suite(&mut self, suite: &SuiteReport<f64>) {
        for c in &suite.checks {
            self.push(c.clone());
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// `Ok` when every check passed, otherwise the list of failed checks.
    pub fn verdict(&self) -> Result<(), CliError> {
        if self.passed {
            return Ok(());
        }
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::ChecksFailed {
            failed: failed.len(),
            total: self.checks.len(),
            names: failed.join(", "),
        })
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pipeline {}", self.pipeline)?;
        for (name, value) in &self.notes {
            writeln!(f, "  {name}: {value:.6e}")?;
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "  {verdict} {}: {:.6e} ({})", c.name, c.value, c.bound)?;
        }
        for a in &self.artifacts {
            writeln!(f, "  wrote {}", a.display())?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(
            f,
            "{} of {} checks passed",
            self.checks.len() - failed,
            self.checks.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_lists_failures_once() {
        let mut r = RunReport::new("demo", &ScenarioConfig::default());
        r.below("ok", 1e-9, 1e-6);
        r.below("bad", 1.0, 1e-6);
        r.push(Check::new("nan", f64::NAN, Bound::Above(0.0)));
        match r.verdict() {
            Err(CliError::ChecksFailed {
                failed,
                total,
                names,
            }) => {
                assert_eq!((failed, total), (2, 3));
                assert_eq!(names, "bad, nan");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(r.to_string().ends_with("1 of 3 checks passed"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["checks"].as_array().unwrap().len(), 3);
        assert_eq!(json["config"]["grid"]["points"], 513);
    }
}
