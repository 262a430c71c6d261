//! File formats and batch commands behind the `reconfig` binary.
//!
//! Manifests and scenario files are TOML; snapshots, plans, graphs and run
//! summaries are JSON. Every file format carries a `schema_version` key.

pub mod commands;
pub mod files;
pub mod manifest;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Version of every file format read or written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// One offending configuration key and what is wrong with it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    pub key: String,
    pub message: String,
}

impl Problem {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Problem {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn list(problems: &[Problem]) -> String {
    problems
        .iter()
        .map(|p| format!("  {p}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Problem>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] reconfig::Error),

    #[error("{failed} of {total} runs failed; see the summary for details")]
    RunsFailed { failed: usize, total: usize },
}

impl CliError {
    /// Process exit status: 2 for infeasible instances, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(reconfig::Error::Infeasible { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
