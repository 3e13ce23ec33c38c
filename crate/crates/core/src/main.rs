use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hunt_approx::runner::{run, Command, RunOptions};

/// Capacities, Yosida approximations and Poisson-subordinated chains on
/// finite state spaces.
#[derive(Parser)]
#[command(name = "hunt-approx", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiply every tolerance; exploratory runs only.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Kernel checks, capacities and the modified excessive sequence.
    Capacity,
    /// Yosida convergence tables.
    YosidaConverge,
    /// Path dump and law checks for the subordinated chain.
    Simulate,
    /// Monte Carlo exit-time bounds and 2-excessivity.
    ExitBound,
    /// Weak-convergence probe and path statistics.
    Report,
    /// Closed-form example suite.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Capacity => Command::Capacity,
        Sub::YosidaConverge => Command::YosidaConverge,
        Sub::Simulate => Command::Simulate,
        Sub::ExitBound => Command::ExitBound,
        Sub::Report => Command::Report,
        Sub::Selftest => Command::Selftest,
    };
    let opts = RunOptions { config: cli.config, seed: cli.seed, out: cli.out, threads: cli.threads, tol_scale: cli.tol_scale };
    match run(command, &opts) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            if let Some(dir) = outcome.out_dir {
                println!("wrote {} files to {}", outcome.files.len() + 1, dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hunt-approx: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
