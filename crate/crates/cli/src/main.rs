// Validation guards are written !(x > 0.0) on purpose: the negation rejects
// NaN along with the out-of-range values, which x <= 0.0 would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! `latgas` — calibrate log-normal terminal-measure short-rate models, scan
//! the convexity factor across volatility and mean-reversion grids, and run
//! the engine's validation battery.
//!
//! Exit codes: 0 success, 1 numerical or validation failure, 2 config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latgas_core::exec;
use thiserror::Error;

mod commands;
mod config;
mod svg;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: parse failures, inconsistent sections, misuse of an engine.
    #[error("{0}")]
    Config(String),
    /// The run itself failed: calibration aborts, unreliable chains, I/O.
    #[error("{0}")]
    Numerical(String),
}

#[derive(Debug, Parser)]
#[command(name = "latgas", version, about = "Lattice-gas short-rate model engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Override the configured engine (exact | sampled).
    #[arg(long, global = true)]
    engine: Option<String>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV/SVG/report outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores; builds without the parallel
    /// feature always run single-threaded).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Bootstrap the adjusted Libors for one process and report them.
    Calibrate { config: PathBuf },
    /// Recalibrate and evaluate ln N_i(phi) over the sigma x gamma grid.
    Scan { config: PathBuf },
    /// Run the validation battery and emit a JSON report.
    Validate {
        config: PathBuf,
        /// Deliberately corrupt the engine under test (self-test of the
        /// battery): "negate-couplings".
        #[arg(long)]
        fault: Option<String>,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides = config::Overrides {
        engine: cli.engine.clone(),
        seed: cli.seed,
        threads: cli.threads,
    };
    let config_path = match &cli.cmd {
        Cmd::Calibrate { config } | Cmd::Scan { config } | Cmd::Validate { config, .. } => config,
    };
    let resolved = config::resolve(config::load(config_path)?, &overrides)?;
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Numerical(format!("creating {}: {e}", cli.out_dir.display())))?;
    let threads = resolved.threads;
    exec::with_threads(threads, || match &cli.cmd {
        Cmd::Calibrate { .. } => commands::cmd_calibrate(&resolved, &cli.out_dir),
        Cmd::Scan { .. } => commands::cmd_scan(&resolved, &cli.out_dir),
        Cmd::Validate { fault, .. } => {
            commands::cmd_validate(&resolved, fault.as_deref(), &cli.out_dir)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Numerical(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
