use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match backproc::cli::run(backproc::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
