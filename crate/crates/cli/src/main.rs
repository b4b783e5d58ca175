//! `iqn-rnn`: train, forecast, evaluate, synthesise data and check
//! gradients from the command line.
//!
//! Every command writes its outputs under `--out-dir` (or
//! `$IQN_RNN_OUT_DIR`) together with a JSON echo of its configuration.
//! Outputs appear only if the command succeeds. Exit codes: 0 success,
//! 2 invalid configuration, 3 bad or missing data, 4 numerical failure,
//! 1 anything else.

mod args;
mod commands;
mod config;
mod error;
mod model;
mod staging;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
