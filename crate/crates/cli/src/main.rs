//! `crowdmi`: validate scenarios, run evacuations, and analyse the order
//! parameter / contact force series they produce.
//!
//! Exit codes: 0 success, 1 invalid input (scenario, params, CSV, flags),
//! 2 runtime halt of the simulation.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("crowdmi: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
