//! `xr`: command-line driver for the retrieval pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
//! Diagnostics go to stderr; tables go to stdout; artifacts go to files.

mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn dispatch(cli: &Cli, matches: &clap::ArgMatches) -> Result<(), CliError> {
    let sub = matches.subcommand().map(|(_, m)| m).expect("a verb is required");
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Embed(a) => commands::embed(a),
        Command::Run(a) => commands::run(a, sub),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate_cmd(a, sub),
        Command::TraceDump(a) => commands::trace_dump(a),
    }
}

fn main() -> ExitCode {
    // the last occurrence of a repeated flag wins, as sweep scripts expect
    let command = Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true));
    let matches = match command.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xr: {e}");
            ExitCode::from(e.code())
        }
    }
}
