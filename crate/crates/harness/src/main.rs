use std::path::PathBuf;
use std::process::ExitCode;

use bspde_lab::{run_and_write, Experiment, ExperimentConfig, LabError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bspde-lab", version, about = "Run verification experiments for the bspde-core solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory (default `out`).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the worker-thread count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the available experiments.
    ListExperiments,
    /// Parse and check a config without running it.
    ValidateConfig { config: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, LabError> {
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<24} {}", e.name(), e.description());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { config } => {
            ExperimentConfig::load(&config)?.validate()?;
            println!("{}: ok", config.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            seed,
            out_dir,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = Some(w);
            }
            if let Some(d) = out_dir {
                cfg.output_dir = Some(d);
            }
            let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            let written = run_and_write(&cfg, &dir)?;
            let report = &written.report;
            for row in &report.rows {
                println!(
                    "{} {:<48} lhs={:<14.6e} rhs={:<14.6e} tol={:.3e}",
                    if row.pass { "PASS" } else { "FAIL" },
                    row.check,
                    row.lhs,
                    row.rhs,
                    row.tol
                );
            }
            for note in &report.notes {
                println!("note: {note}");
            }
            println!("wrote {}", written.csv.display());
            Ok(if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
