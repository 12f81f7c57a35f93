//! `relmrf` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed or missing input, 3 runtime failure.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Input(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

/// Library errors about file contents or vocabulary are input errors; bad
/// parameters are usage errors; the rest happened while running.
impl From<relmrf::Error> for Failure {
    fn from(e: relmrf::Error) -> Self {
        use relmrf::Error as E;
        match e {
            E::Parse { .. } | E::Io { .. } | E::MissingPrior { .. } | E::Coverage(_) | E::Domain(_) => {
                Failure::Input(e.into())
            }
            E::Config(_) | E::TooManyVariables { .. } => Failure::Usage(e.to_string()),
            E::Partition { .. } | E::WorkerPool(_) | E::Json(_) => Failure::Runtime(e.into()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Infer(a) => commands::infer(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::TrainPrior(a) => commands::train_prior(&a),
        Command::Stats(a) => commands::stats(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
