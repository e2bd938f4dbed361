//! Command-line entry points: crawl, ingest, index, fill, eval, synth and
//! serve.

pub mod args;
pub mod commands;
pub mod eval;
pub mod fetch;
pub mod forms;

use std::path::Path;

pub use args::{Cli, Command};

/// Exit code 2 for bad invocations, 1 for everything that went wrong
/// after the inputs were accepted.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Failed(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

pub type CmdResult = Result<(), CliError>;

pub(crate) fn failed(msg: impl std::fmt::Display) -> CliError {
    CliError::Failed(anyhow::anyhow!("{msg}"))
}

/// A path named on the command line that must already exist.
pub(crate) fn existing(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} `{}` does not exist", path.display())))
    }
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Crawl(a) => commands::crawl(&a),
        Command::Ingest(a) => commands::ingest(&a),
        Command::Index(a) => commands::index(&a),
        Command::Fill(a) => commands::fill(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Serve(a) => commands::serve(&a),
    }
}
