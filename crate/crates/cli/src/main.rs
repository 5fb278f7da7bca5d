use std::process::ExitCode;

use clap::Parser;
use co2fdd_cli::{execute, report_failure, Cli};

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((failure, dir)) => {
            report_failure(&failure, dir.as_deref());
            ExitCode::FAILURE
        }
    }
}
