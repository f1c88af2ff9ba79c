//! `playstyle` — command-line harness for the playstyle similarity
//! toolkit: generate styled datasets, train discretization models, and
//! evaluate playstyle distances and identification accuracy.
//!
//! Exit codes: 0 success, 2 usage errors, 3 malformed data or model
//! files, 4 undefined distance (empty state intersection), 5 training
//! divergence, 1 anything else.

mod commands;
mod common;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "playstyle", version, about = "Playstyle similarity toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a grid of styled datasets and a manifest.
    GenData(commands::gen_data::GenDataArgs),
    /// Train a hierarchical state discretization model.
    TrainHsd(commands::train_hsd::TrainArgs),
    /// Playstyle distance between two datasets.
    Distance(commands::distance::DistanceArgs),
    /// Style-identification accuracy over a candidate grid.
    Accuracy(commands::accuracy::AccuracyArgs),
    /// Distinct discrete states a dataset occupies under a model.
    CodebookUsage(commands::usage::UsageArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(args) => commands::gen_data::run(args),
        Command::TrainHsd(args) => commands::train_hsd::run(args),
        Command::Distance(args) => commands::distance::run(args),
        Command::Accuracy(args) => commands::accuracy::run(args),
        Command::CodebookUsage(args) => commands::usage::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            common::exit_code_for(&err)
        }
    }
}
