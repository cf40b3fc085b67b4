mod args;
mod commands;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Core(bellforge_core::Error),
    Usage(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<bellforge_core::Error> for CliError {
    fn from(e: bellforge_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_infeasible() => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let f = cli.format;
    let outcome = match &cli.command {
        Command::Predict(a) => commands::predict(a, f),
        Command::Optimize(a) => commands::optimize(a, f),
        Command::Hvdz(a) => commands::hvdz(a, f),
        Command::Audit(a) => commands::audit(a, f),
        Command::Simulate(a) => commands::simulate(a, f),
        Command::Analyze(a) => commands::analyze(a, f),
        Command::Table(a) => commands::table(a, f),
    };
    match outcome {
        Ok(o) => {
            let mut out = std::io::stdout().lock();
            if out
                .write_all(o.stdout.as_bytes())
                .and_then(|_| out.flush())
                .is_err()
            {
                return ExitCode::from(1);
            }
            ExitCode::from(o.code)
        }
        Err(e) => {
            eprintln!("bellforge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
