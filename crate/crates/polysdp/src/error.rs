use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments or data (non-finite entries, bad ranges, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Dimension mismatch between weights, data or operators.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Least-squares activation fit could not be solved.
    #[error("activation fit failed: {0}")]
    Fit(String),

    /// A constraint required by an operation does not hold.
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// The conic solver did not reach an acceptable residual.
    #[error("solver failed: {0}")]
    Solve(String),

    /// Neural decomposition preconditions violated beyond repair.
    #[error("decomposition failed: {0}")]
    Decomposition(String),

    /// Numerical breakdown inside an otherwise valid computation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Gradient training diverged.
    #[error("training diverged at epoch {epoch} (objective {objective:e})")]
    Divergence { epoch: usize, objective: f64 },

    /// CSV or config parsing failure with 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    /// 2 = validation error, 3 = solver/numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Shape(_)
            | Error::Fit(_)
            | Error::Constraint(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Solve(_)
            | Error::Decomposition(_)
            | Error::Numerical(_)
            | Error::Divergence { .. } => 3,
        }
    }
}
