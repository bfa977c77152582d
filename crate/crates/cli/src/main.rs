//! Command line front end: simulate scene bundles, run the accumulation
//! pipeline, score predicted flow, and export merged clouds.
//!
//! Exit codes are a stable contract: 0 ok, 2 input or validation error,
//! 3 pipeline failure, 4 evaluation mismatch. Argument parse errors exit
//! with 2 as well (clap's default).

mod eval;
mod export;
mod labels;
mod manifest;
mod run;
mod simulate;

use clap::{Parser, Subcommand};
use rigid_accum_core::io::PlyFormat;
use std::process::ExitCode;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_PIPELINE: u8 = 3;
pub const EXIT_EVAL: u8 = 4;

/// An error tagged with the exit code it must produce.
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INPUT, error: error.into() }
    }

    pub fn pipeline(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_PIPELINE, error: error.into() }
    }

    pub fn evaluation(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_EVAL, error: error.into() }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// `RIGID_ACCUM_SEED` overrides the seed resolved from any config file.
pub fn seed_from_env() -> CliResult<Option<u64>> {
    match std::env::var("RIGID_ACCUM_SEED") {
        Ok(raw) => raw.trim().parse::<u64>().map(Some).map_err(|_| {
            CliError::input(anyhow::anyhow!(
                "RIGID_ACCUM_SEED must be a non-negative integer, got `{raw}`"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::input(anyhow::anyhow!("RIGID_ACCUM_SEED: {e}"))),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlyChoice {
    Ascii,
    Binary,
}

impl From<PlyChoice> for PlyFormat {
    fn from(choice: PlyChoice) -> Self {
        match choice {
            PlyChoice::Ascii => PlyFormat::Ascii,
            PlyChoice::Binary => PlyFormat::BinaryLittleEndian,
        }
    }
}

#[derive(Parser)]
#[command(name = "rigid-accum", version)]
#[command(about = "Accumulate a LiDAR sequence into one motion-compensated frame")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    /// Results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle from a description file.
    Simulate(simulate::Args),
    /// Run the accumulation pipeline on a scene bundle.
    Run(run::Args),
    /// Score a run's flow against a bundle's ground truth.
    Eval(eval::Args),
    /// Merge a bundle and its run results into one labeled PLY.
    Export(export::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Errors only on re-initialization, which a single call cannot hit.
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("first thread pool initialization");
    }
    let result = match &cli.command {
        Command::Simulate(args) => simulate::cmd_simulate(args),
        Command::Run(args) => run::cmd_run(args),
        Command::Eval(args) => eval::cmd_eval(args),
        Command::Export(args) => export::cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
