use std::process::ExitCode;

use clap::Parser;
use qnklab::cli::{dispatch, exit_code, tolerance_from_env, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = tolerance_from_env().and_then(|tol| dispatch(&cli.command, tol));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("qnklab: verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("qnklab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
