use std::path::PathBuf;

/// Errors produced by generators, estimators, the greedy solver and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The corrected Gram matrix is not sufficiently positive definite.
    #[error("strong convexity violated: lambda_min = {lambda_min:e} <= floor {floor:e}")]
    StrongConvexityViolation { lambda_min: f64, floor: f64 },

    /// `Z_I^T Z_I` became numerically singular at the given (1-based) iteration.
    #[error("singular Gram matrix at iteration {iteration}")]
    SingularGram { iteration: usize },

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("insufficient points: {0}")]
    InsufficientPoints(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
