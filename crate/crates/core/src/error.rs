use thiserror::Error;

use crate::auction::Assignment;

/// Coarse error classes, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum SdotError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("unbalanced transport problem: supply {supply}, demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },

    #[error("auction did not converge within {bids} bids")]
    NoConvergence { bids: u64, best: Box<Assignment> },

    #[error("adjacency graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<usize>>),

    #[error("remaining capacity of target {target} went negative ({value:e})")]
    MassAccounting { target: usize, value: f64 },

    #[error("no closed-form cost integral for this cost/density pair")]
    Unavailable,

    #[error("oracle size cap exceeded: {sources} sources x {sinks} sinks")]
    OracleTooLarge { sources: usize, sinks: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SdotError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            SdotError::Config(_) | SdotError::Parse(_) | SdotError::InvalidInput(_) => {
                ErrorCategory::Config
            }
            SdotError::DimensionMismatch { .. } => ErrorCategory::Config,
            SdotError::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, SdotError>;
