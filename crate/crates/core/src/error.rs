use thiserror::Error;

use crate::gaussian::ModeLabel;

/// Errors raised by the covariance-matrix and key-rate routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("covariance matrix violates the uncertainty principle (min eigenvalue of gamma + i*Omega = {0:e})")]
    NotPhysical(f64),

    #[error("mode {0} not present")]
    UnknownMode(ModeLabel),

    #[error("duplicate mode label {0}")]
    DuplicateMode(ModeLabel),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient key balance for bob {bob}: need {needed} bits, have {available}")]
    InsufficientBalance { bob: usize, needed: u64, available: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
