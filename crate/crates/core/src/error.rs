use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MeibError>;

#[derive(Debug, Error)]
pub enum MeibError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("eigensolver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MeibError {
    /// Process exit status for the command-line driver: 1 for bad
    /// configuration, 2 for everything that fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            MeibError::Config(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        MeibError::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        MeibError::Parameter(msg.into())
    }
}
