//! Library half of the `srheat` command: model corpus, run configuration,
//! verification checks, and report emission. The binary only parses
//! arguments and maps outcomes to exit codes.

pub mod checks;
pub mod commands;
pub mod config;
pub mod model;
pub mod output;

use std::fmt;

pub use config::RunConfig;
pub use model::{corpus_names, load_corpus, ModelSpec};

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or inconsistent input.
    Usage(String),
    /// A numerical method failed.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Numerical(_) => exit::NUMERICAL,
        }
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<srheat_core::Error> for CliError {
    fn from(e: srheat_core::Error) -> Self {
        use srheat_core::Error as E;
        match e {
            E::Stability { .. } | E::IllConditioned { .. } | E::Numerical(_) | E::Inconclusive(_) | E::StencilOverflow { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
