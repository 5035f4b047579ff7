//! `landau`: configuration-driven runner for the landau-core solvers.

mod compare;
mod config;
mod error;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "landau", version, about = "Run, validate and compare regularized Landau experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// Compare the diagnostics of two run directories.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
}

fn load(path: &PathBuf) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::parse(&output::read(path)?)?;
    experiments::validate(&cfg)?;
    Ok(cfg)
}

/// Caps the worker pool at `LANDAU_THREADS` when set.
fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LANDAU_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError::config(format!("LANDAU_THREADS = {v}: expected a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("LANDAU_THREADS: {e}")))
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    init_threads()?;
    match cmd {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let summary = experiments::run(&cfg)?;
            print!("{}", summary.render());
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("ok: {} ({} keys resolved)", cfg.experiment, cfg.entries().len());
        }
        Command::Compare { dir_a, dir_b } => print!("{}", compare::compare(&dir_a, &dir_b)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}
