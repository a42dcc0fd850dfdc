//! Command line front end for the mean field toolkit.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for
//! numerical failures, 64 for unusable command lines. Failures print a
//! one-line JSON object to stderr.

mod cli;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use meanfield::MeanFieldError;

use crate::cli::Cli;

/// Maps an error to the process exit code: 2 for anything wrong with
/// the input or environment, 3 for numerical failures.
fn exit_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<MeanFieldError>() {
        Some(MeanFieldError::Numerical(_)) | Some(MeanFieldError::Singularity(_)) => 3,
        Some(_) => 2,
        None => 2,
    }
}

/// Short machine-readable tag for the failure class.
fn kind_for(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<MeanFieldError>() {
        Some(MeanFieldError::Config(_)) => "config",
        Some(MeanFieldError::Precondition(_)) => "precondition",
        Some(MeanFieldError::Singularity(_)) => "singularity",
        Some(MeanFieldError::Resolution(_)) => "resolution",
        Some(MeanFieldError::Numerical(_)) => "numerical",
        Some(MeanFieldError::Io(_)) => "io",
        None => "error",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            // Clap renders help to stdout and errors to stderr.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let body = serde_json::json!({
                "error": {
                    "kind": kind_for(&err),
                    "message": format!("{err:#}"),
                }
            });
            eprintln!("{body}");
            ExitCode::from(exit_for(&err))
        }
    }
}
