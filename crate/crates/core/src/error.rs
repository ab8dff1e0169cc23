use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("insufficient samples: requested {requested} distinct rows from {available}")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("empty split: both split sizes must be positive")]
    EmptySplit,

    #[error("blow-up: non-finite state at node {node} (t = {t})")]
    BlowUp { node: usize, t: f64 },

    #[error("gamma = {0} outside [0, 1)")]
    InvalidGamma(f64),

    #[error("oracle scale: {0}")]
    OracleScale(String),

    #[error("segment assembly: {0}")]
    Segments(String),

    #[error("unknown basis function `{0}`")]
    UnknownBasis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
