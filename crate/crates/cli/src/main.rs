//! `hat`: train, run, profile and inspect hybrid attention restoration models.

mod args;
mod commands;
mod source;

use std::process::ExitCode;

use clap::Parser;
use hat_core::Error;

use args::{Cli, Precision};

/// Process exit status for a failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownEntry { .. } => 2,
        Error::Numeric(_) => 4,
        Error::Tensor(_) | Error::Io { .. } | Error::Data(_) | Error::Checkpoint(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.precision {
        Precision::F32 => commands::run::<f32>(&cli.command),
        Precision::F64 => commands::run::<f64>(&cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
