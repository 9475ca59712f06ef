//! Command-line pipeline and HTTP service over the core engine.

pub mod args;
pub mod commands;
pub mod config;
pub mod service;

use std::fmt;

use args::{Cli, Command};
use config::RunConfig;

/// Exit code 2 for usage errors, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(embtree_core::Error),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => e.fmt(f),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<embtree_core::Error> for CliError {
    fn from(e: embtree_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    use commands::*;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Reduce(a) => cmd_reduce(a, &cfg),
        Command::Train(a) => cmd_train(a, &cfg),
        Command::Summarize(a) => cmd_summarize(a, &cfg),
        Command::Explain(a) => cmd_explain(a, &cfg),
        Command::Export(a) => cmd_export(a, &cfg),
        Command::Serve(a) => cmd_serve(a, &cfg),
        Command::Synth(a) => cmd_synth(a, &cfg),
    }
}
