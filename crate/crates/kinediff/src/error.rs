//! Error taxonomy shared across the crate.
//!
//! Process exit codes follow the CLI contract: 0 ok, 2 config error,
//! 3 data error, 4 numeric error.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or inconsistent experiment setup.
    #[error("config error: {0}")]
    Config(String),

    /// Broken input data: missing files, bad manifests, dimension overflow.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed file content. `offset` is the byte position of the first
    /// inconsistency.
    #[error("parse error at offset {offset}: {what}")]
    Parse { offset: u64, what: String },

    /// Non-finite values where the math requires finite ones.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Caller violated an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code for this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
