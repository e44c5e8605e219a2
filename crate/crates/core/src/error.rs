//! Error type shared by all modules.

use thiserror::Error;

/// Failures reported by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid arguments, dimensions or configuration.
    #[error("usage error: {0}")]
    Usage(String),
    /// Parameters outside the documented domain of a model or formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// The point is not a Bogdanov-Takens point, or the normal form is degenerate.
    #[error("not a Bogdanov-Takens point: {0}")]
    NotBt(String),
    /// A transversality condition fails.
    #[error("transversality failure: {0}")]
    Transversality(String),
    /// A singular linear system where a regular one was expected.
    #[error("singular system: {0}")]
    Singular(String),
    /// A right-hand side violating the Fredholm solvability condition.
    #[error("inconsistent right-hand side ({context}): slack {slack:.3e}")]
    Inconsistent {
        /// Which system was being solved.
        context: String,
        /// Bordered slack value.
        slack: f64,
    },
    /// An iterative method failed to converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// Non-finite values or other numerical breakdown.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A predictor requested outside its range of validity.
    #[error("predictor out of range: {0}")]
    OutOfRange(String),
    /// I/O failure while writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for usage and domain problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Domain(_) | Error::NotBt(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

/// Result alias.
pub type Result<T> = std::result::Result<T, Error>;
