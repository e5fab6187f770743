//! Command-line front end: fetch signals, predict one pair, train the
//! weighted vote, evaluate every strategy.

pub mod args;
pub mod commands;
pub mod config;

use anyhow::Result;

pub use args::{Cli, Command, CommonArgs};
pub use config::RunConfig;

/// Run one parsed invocation and return what it prints on stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let rc = RunConfig::resolve(&cli.common)?;
    match &cli.command {
        Command::Fetch => commands::fetch(&rc),
        Command::Predict {
            class_a,
            class_b,
            phrase_a,
            phrase_b,
        } => commands::predict(&rc, class_a, class_b, phrase_a.as_deref(), phrase_b.as_deref()),
        Command::Evaluate => commands::evaluate(&rc).map(|(_, out)| out),
        Command::Train => commands::train(&rc).map(|(_, out)| out),
    }
}
