//! `evsched`: generate charging scenarios, run and compare dispatch
//! policies, sweep parameter grids, and check stored results.

mod commands;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "evsched",
    version,
    about = "Scheduler testbench for shared EV charging stations",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario file, either synthetic or from a session log.
    Generate(commands::generate::GenerateArgs),
    /// Run one or more policies on a scenario and write result files.
    Run(commands::run::RunArgs),
    /// Run a (alpha, congestion) grid across seeds and aggregate the results.
    Sweep(commands::sweep::SweepArgs),
    /// Re-check the applied schedule stored in a result file.
    Validate(commands::validate::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => commands::generate::execute(args),
        Command::Run(args) => commands::run::execute(args),
        Command::Sweep(args) => commands::sweep::execute(args),
        Command::Validate(args) => commands::validate::execute(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
