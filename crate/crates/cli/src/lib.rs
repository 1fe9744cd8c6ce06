//! Batch commands over the `syhd-core` library: dataset ingestion, model
//! files, experiment sweeps and accelerator estimates.

pub mod args;
mod commands;
pub mod error;

use args::{Cli, Command};
pub use error::{exit, CliError};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(c) => commands::train(c),
        Command::Predict(c) => commands::predict(c),
        Command::Eval(c) => commands::eval(c),
        Command::Finetune(c) => commands::finetune(c),
        Command::ReconError(c) => commands::recon_error(c),
        Command::Sweep(c) => commands::sweep(c),
        Command::Incremental(c) => commands::incremental(c),
        Command::Perfsim(c) => commands::perfsim(c),
        Command::SeedSweep(c) => commands::seed_sweep_cmd(c),
    }
}
