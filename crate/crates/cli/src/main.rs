//! `mri-uq`: dataset generation, training, reconstruction, uncertainty maps,
//! risk estimation and residual normality tables.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};
use exit::Failure;

/// Thread count for the worker pool; the rayon default when unset.
const THREADS_ENV: &str = "MRI_UQ_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mri-uq", version, about = "Uncertainty quantification for undersampled Fourier imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a phantom dataset and its manifest.
    Gen,
    /// Train a VAE reconstructor on the training split.
    Train,
    /// Reconstruct the test split.
    Recon,
    /// Monte Carlo uncertainty map for one test image.
    Map,
    /// Per-case risk estimates and their correlation with the true error.
    Sure,
    /// Residual statistics of zero-filled and density-compensated inputs.
    Qq,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: &Cli) -> Result<PathBuf, Failure> {
    configure_threads()?;
    let cfg = RunConfig::resolve(&cli.flags)?;
    cfg.validate()?;
    match cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Recon => commands::recon(&cfg),
        Command::Map => commands::map(&cfg),
        Command::Sure => commands::sure(&cfg),
        Command::Qq => commands::qq(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
