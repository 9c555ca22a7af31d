//! Check rows and report files.
//!
//! Each experiment writes `<name>.csv` (one row per check),
//! `<name>.summary.json` (rows, diagnostics and the config echo) and
//! `<name>.meta.json` (timestamps and environment). The first two depend
//! only on the config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// `|lhs - rhs| <= tol`.
    Close,
    /// `lhs <= rhs`.
    AtMost,
    /// `lhs >= rhs`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub check: String,
    pub paper_anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(skip)]
    pub comparison: Comparison,
}

impl Row {
    fn build(check: &str, anchor: &str, lhs: f64, rhs: f64, tol: f64, comparison: Comparison) -> Self {
        let abs_err = (lhs - rhs).abs();
        let rel_err = if rhs != 0.0 { abs_err / rhs.abs() } else { abs_err };
        let pass = match comparison {
            Comparison::Close => abs_err <= tol,
            Comparison::AtMost => lhs <= rhs,
            Comparison::AtLeast => lhs >= rhs,
        };
        Self {
            experiment: String::new(),
            check: check.to_string(),
            paper_anchor: anchor.to_string(),
            lhs,
            rhs,
            abs_err,
            rel_err,
            tol,
            pass,
            comparison,
        }
    }

    pub fn close(check: &str, anchor: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::build(check, anchor, lhs, rhs, tol, Comparison::Close)
    }

    pub fn at_most(check: &str, anchor: &str, value: f64, bound: f64) -> Self {
        Self::build(check, anchor, value, bound, 0.0, Comparison::AtMost)
    }

    pub fn at_least(check: &str, anchor: &str, value: f64, bound: f64) -> Self {
        Self::build(check, anchor, value, bound, 0.0, Comparison::AtLeast)
    }

    /// A check that could not be evaluated, such as a diverged solve.
    pub fn failed(check: &str, anchor: &str) -> Self {
        let mut row = Self::build(check, anchor, f64::NAN, f64::NAN, 0.0, Comparison::Close);
        row.pass = false;
        row
    }
}

/// Scalar diagnostics keyed by name; kept sorted for stable output.
pub type Diagnostics = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub pass: bool,
    pub rows: Vec<Row>,
    pub diagnostics: Diagnostics,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig, mut rows: Vec<Row>, diagnostics: Diagnostics, notes: Vec<String>) -> Self {
        for r in &mut rows {
            r.experiment = config.experiment.clone();
        }
        // Where and on how many threads a run happened goes to the metadata
        // file; the summary must not depend on it.
        let mut config = config.clone();
        config.output_dir = None;
        config.workers = None;
        Self {
            experiment: config.experiment.clone(),
            pass: !rows.is_empty() && rows.iter().all(|r| r.pass),
            rows,
            diagnostics,
            notes,
            config,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.experiment))
    }

    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf> {
        let path = self.csv_path(dir);
        let mut w = csv::Writer::from_path(&path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_summary(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.summary.json", self.experiment));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub experiment: String,
    pub started: String,
    pub elapsed_seconds: f64,
    pub workers: usize,
    pub version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
}

impl Meta {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.meta.json", self.experiment));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons() {
        assert!(Row::close("c", "a", 1.0, 1.05, 0.1).pass);
        assert!(!Row::close("c", "a", 1.0, 1.2, 0.1).pass);
        assert!(Row::at_most("c", "a", 0.5, 1.0).pass);
        assert!(!Row::at_most("c", "a", 1.5, 1.0).pass);
        assert!(Row::at_least("c", "a", 2.0, 1.7).pass);
        assert!(!Row::at_least("c", "a", f64::NAN, 1.7).pass);
        assert!(!Row::at_most("c", "a", f64::NAN, 1.0).pass);
        assert!(!Row::failed("c", "a").pass);
    }

    #[test]
    fn relative_error_against_zero_is_absolute() {
        let r = Row::close("c", "a", 1e-3, 0.0, 1e-2);
        assert_eq!(r.rel_err, 1e-3);
    }
}
