//! Batch front-end for `rt-spectrum`: regime classification, dispersion
//! scans, sharp rates, mode export and mesh-convergence tables.
//!
//! Exit codes: 0 success, 2 input error, 3 regime precondition, 4 numerical
//! failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;
mod manifest;
mod output;

pub use commands::{classify_report, convergence_table, dispersion_rows, ClassifyReport, ConvergenceTable, DispersionRow};
pub use manifest::RunManifest;
pub use output::fmt_f64;

#[derive(Debug, Parser)]
#[command(name = "rt-spectrum", version, about = "Linear Rayleigh-Taylor growth rates for two viscous layers")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Fluid configuration (flat JSON object).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Elements per layer.
    #[arg(long, global = true, default_value_t = 128)]
    pub mesh: usize,
    /// Relative tolerance on the growth-rate root.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
    /// JSON header plus a little-endian f64 sidecar (mode only).
    Bin,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Stability regime and critical quantities.
    Classify,
    /// Growth rate at every lattice frequency up to --xi-max.
    Dispersion {
        #[arg(long)]
        xi_max: f64,
    },
    /// Largest growth rate over the unstable frequencies.
    SharpRate,
    /// Sample the growing mode at one lattice frequency.
    Mode {
        #[arg(long, num_args = 2, value_names = ["N1", "N2"], allow_negative_numbers = true, required = true)]
        xi: Vec<i64>,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Grid points as N1,N2,N3.
        #[arg(long, default_value = "16,16,33", value_parser = parse_grid)]
        grid: [usize; 3],
        /// Place samples at their physical heights.
        #[arg(long)]
        physical: bool,
        /// Scale to unit combined L2 norm of velocity and surfaces.
        #[arg(long)]
        normalize: bool,
        /// Scale so the larger surface amplitude at t = 0 is A (applied after
        /// --normalize; defaults to 0.01 with --physical).
        #[arg(long, value_name = "A")]
        amplitude: Option<f64>,
    },
    /// Growth rate on a sequence of meshes with Richardson extrapolation.
    Convergence {
        #[arg(long, num_args = 2, value_names = ["N1", "N2"], allow_negative_numbers = true, required = true)]
        xi: Vec<i64>,
        #[arg(long, value_delimiter = ',', required = true)]
        meshes: Vec<usize>,
    },
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|_| "expected N1,N2,N3".to_string())
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Regime(String),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Regime(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

/// Runs one command, inside a dedicated thread pool when `--threads` is set.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match cli.global.threads {
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
            pool.install(|| commands::dispatch(cli))
        }
        None => commands::dispatch(cli),
    }
}
