//! `diswot`: score, search and rank student architectures without training.
//!
//! Exit status is 0 on success, 1 on runtime or data errors and 2 on usage
//! errors (bad flags, unknown proxies, missing architectures in a join).

mod common;
mod rank;
mod score;
mod search;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "diswot", version, about = "Training-free student architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score candidate architectures with one or more proxies.
    Score(score::ScoreArgs),
    /// Evolutionary or random search over a space.
    Search(search::SearchArgs),
    /// Correlate proxy scores with an accuracy table.
    Rank(rank::RankArgs),
}

/// An error the user can fix by changing the invocation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(diswot_core::Error::MissingArch(_)) = cause.downcast_ref::<diswot_core::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(a) => score::run(a),
        Command::Search(a) => search::run(a),
        Command::Rank(a) => rank::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
