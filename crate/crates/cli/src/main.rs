mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// 2 for bad input or configuration, 3 for numerical failures.
fn exit_code(err: &lgp_core::LgpError) -> u8 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Forecast(a) => commands::cmd_forecast(a),
        Command::Monitor(a) => commands::cmd_monitor(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Generate(a) => commands::cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
