//! `locreg` command-line interface.
//!
//! Every subcommand writes its tables as CSV and a summary JSON (embedding the
//! resolved configuration) into `--output-dir`. `LOCREG_THREADS` caps the
//! worker pool. Failures exit with status 1 and a JSON error object on stderr.

mod commands;
mod config;
mod error;
mod io;

use std::process::ExitCode;

use clap::Parser;

use crate::config::{Cli, RunConfig};
use crate::error::CliError;

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LOCREG_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|t| *t > 0).ok_or_else(|| {
        CliError::Config(format!("LOCREG_THREADS='{raw}' is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = cli.command.split();
    let result = init_threads()
        .and_then(|_| RunConfig::resolve(kind, flags))
        .and_then(|cfg| commands::run(&cfg));
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
