//! Experiment runner for the bspde-core solvers: JSON configs in, CSV and
//! JSON reports out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
pub use experiments::Experiment;
pub use report::{ExperimentReport, Meta, Row};

/// Runs the configured experiment on a pool of `config.workers` threads
/// (all cores when unset). Solver divergence becomes a failed row; other
/// solver errors are returned.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let exp = config.experiment()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::Config(format!("cannot build thread pool: {e}")))?;
    let outcome = match pool.install(|| exp.run(config)) {
        Ok(o) => o,
        Err(LabError::Solver(e @ (bspde_core::Error::NoConvergence { .. } | bspde_core::Error::BlowUp { .. }))) => {
            experiments::Outcome {
                rows: vec![Row::failed("solver", "solver-convergence")],
                notes: vec![e.to_string()],
                ..Default::default()
            }
        }
        Err(e) => return Err(e),
    };
    Ok(ExperimentReport::new(config, outcome.rows, outcome.diagnostics, outcome.notes))
}

/// Files written by [`run_and_write`].
#[derive(Debug, Clone)]
pub struct Written {
    pub report: ExperimentReport,
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub meta: PathBuf,
}

/// Runs the experiment and writes its CSV, summary and metadata to `dir`.
pub fn run_and_write(config: &ExperimentConfig, dir: &Path) -> Result<Written> {
    std::fs::create_dir_all(dir)?;
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let report = run(config)?;
    let meta = Meta {
        experiment: config.experiment.clone(),
        started: started.to_rfc3339(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        workers: config.workers.unwrap_or_else(rayon::current_num_threads),
        version: env!("CARGO_PKG_VERSION"),
        os: std::env::consts::OS,
        arch: std::env::consts::ARCH,
    };
    Ok(Written {
        csv: report.write_csv(dir)?,
        summary: report.write_summary(dir)?,
        meta: meta.write(dir)?,
        report,
    })
}
