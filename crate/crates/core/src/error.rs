use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("diagonalization failed: {0}")]
    Diagonalization(String),
    #[error("oracle did not converge up to basis size {max_basis} (last change {last_change:.3e})")]
    NotConverged { max_basis: usize, last_change: f64 },
    #[error("insufficient samples: need at least {needed}, have {have}")]
    InsufficientSamples { needed: u64, have: u64 },
    #[error("non-finite action at chain {chain}, sweep {sweep}")]
    NonFiniteAction { chain: usize, sweep: u64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint was written for different parameters")]
    ParamsMismatch,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
