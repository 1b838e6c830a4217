//! Command-line driver for `orthodict`.
//!
//! `train` fits a union-of-orthonormal-bases (SBO) or AK-SVD dictionary
//! and writes it with its codes and a JSON report, `represent` codes
//! signals with a stored dictionary, `compare` runs a sweep and writes one
//! CSV row per configuration.

pub mod args;
pub mod commands;

use std::ffi::OsString;

use anyhow::Result;
use clap::Parser;

pub use args::{Algo, Cli, Command, CompareArgs, DataArgs, RepresentArgs, RunArgs, SboArgs, TrainArgs};
pub use commands::{NumericalFailure, RepresentSummary, SweepRow, TrainSummary};

/// Exit status for invalid configuration or usage.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;

/// Parses raw arguments. Options from a `--config` file are placed before
/// the command-line ones, so flags win.
pub fn parse(raw: Vec<OsString>) -> Result<Cli> {
    let mut raw = raw;
    if let Some(path) = args::find_config(&raw) {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| orthodict::Error::Config(format!("reading {}: {e}", path.display())))?;
        let extra = args::config_args(&text).map_err(orthodict::Error::Config)?;
        // after the program name and the subcommand
        let at = 2.min(raw.len());
        raw.splice(at..at, extra);
    }
    Ok(Cli::try_parse_from(raw)?)
}

pub enum Outcome {
    Train(TrainSummary),
    Represent(RepresentSummary),
    Compare(Vec<SweepRow>),
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    Ok(match &cli.command {
        Command::Train(a) => Outcome::Train(commands::train(a)?),
        Command::Represent(a) => Outcome::Represent(commands::represent_cmd(a)?),
        Command::Compare(a) => Outcome::Compare(commands::compare(a)?),
    })
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<NumericalFailure>().is_some() {
        return EXIT_NUMERICAL;
    }
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return e.exit_code();
    }
    match err.downcast_ref::<orthodict::Error>() {
        Some(orthodict::Error::Decomposition { .. }) => EXIT_NUMERICAL,
        Some(_) => EXIT_USAGE,
        None => 1,
    }
}
