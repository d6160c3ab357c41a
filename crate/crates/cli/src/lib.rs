//! The `laqg` driver: one subcommand per pipeline stage. Each stage writes
//! its artifacts and a run manifest into an output directory that the next
//! stage takes as input.

pub mod args;
pub mod commands;
pub mod config_file;
pub mod error;
pub mod files;
pub mod manifest;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{exit_code, EXIT_OK, EXIT_USAGE};

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::PrepareData(a) => commands::prepare::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Generate(a) => commands::generate::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::BinReport(a) => commands::report::bin_report(a),
        Command::Compare(a) => commands::report::compare(a),
        Command::ServeAnneval(a) => commands::serve::run(a),
    }
}

/// Parses, runs and returns the process exit code; errors go to stderr.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match config_file::merge(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
