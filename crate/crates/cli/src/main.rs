//! `lis-lab`: criteria checks, bounds, oracle verification and simulation
//! for chains with complete connections, driven by JSON kernel specs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod input;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BoundArgs, CheckArgs, SimulateArgs, VerifyArgs};

#[derive(Parser)]
#[command(name = "lis-lab", version, about = "Uniqueness criteria and loss-of-memory bounds for chains with complete connections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dobrushin and boundary-uniformity criteria.
    Check(CheckArgs),
    /// Memory, correlation or comparison bounds, optionally against exact values.
    Bound(BoundArgs),
    /// Oracle property suite.
    Verify(VerifyArgs),
    /// Sample a path and tabulate empirical correlations.
    Simulate(SimulateArgs),
}

/// Sets the global pool from `LIS_LAB_THREADS` and returns its size.
fn configure_threads() -> anyhow::Result<usize> {
    if let Ok(v) = std::env::var("LIS_LAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("LIS_LAB_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("LIS_LAB_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(rayon::current_num_threads())
}

fn is_criterion_failure(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| matches!(c.downcast_ref::<lis_core::LisError>(), Some(lis_core::LisError::CriterionNotMet(_))))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let run = || -> anyhow::Result<commands::Outcome> {
        let threads = configure_threads()?;
        match &cli.command {
            Command::Check(a) => commands::check(a, threads),
            Command::Bound(a) => commands::bound(a, threads),
            Command::Verify(a) => commands::verify(a, threads),
            Command::Simulate(a) => commands::simulate(a, threads),
        }
    };
    match run() {
        Ok(o) if o.passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_criterion_failure(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
