//! `rpcmvs`: scripting front end over the rpcmvs library.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable / invalid inputs (exit 2).
    Usage(String),
    /// The computation itself failed (exit 1).
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<rpcmvs::Error> for CliError {
    fn from(e: rpcmvs::Error) -> Self {
        use rpcmvs::Error as E;
        let msg = e.to_string();
        match e {
            E::MissingKey(_)
            | E::NonNumeric { .. }
            | E::CoefficientCount { .. }
            | E::InvalidModel(_)
            | E::MissingInverse
            | E::HeightOutOfRange { .. }
            | E::ShapeMismatch(_)
            | E::InvalidArgument(_)
            | E::PolarLatitude(_)
            | E::Format(_)
            | E::Io(_)
            | E::Json(_) => CliError::Usage(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
