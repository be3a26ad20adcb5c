use std::path::PathBuf;

use thiserror::Error;

/// Exit code for unreadable or invalid configuration and input files.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code for failures while sampling or computing.
pub const EXIT_RUNTIME: i32 = 2;
/// Exit code when an oracle comparison misses its tolerance.
pub const EXIT_ORACLE_BREACH: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid data in {path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
    #[error("{failed} oracle check(s) outside tolerance; see {report}")]
    OracleBreach { failed: usize, report: PathBuf },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Config { .. } | CliError::Data { .. } => EXIT_CONFIG,
            CliError::Write { .. } | CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::OracleBreach { .. } => EXIT_ORACLE_BREACH,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}
