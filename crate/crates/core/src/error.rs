use thiserror::Error;

/// Errors raised by model construction, solvers and scenario I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a modelling assumption (rates, domain membership, schema contents).
    #[error("validation error: {0}")]
    Validation(String),

    /// Inputs have inconsistent shapes or an impossible structure.
    #[error("structural error: {0}")]
    Structural(String),

    /// A solver or planner was called outside the hypotheses it relies on.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// An iterative method failed to produce a trustworthy answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An integrated state left the sensible domain by more than the guard tolerance.
    #[error("domain violation at t = {time}: {detail}")]
    Domain { time: f64, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Domain { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
