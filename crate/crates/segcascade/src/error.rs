//! Crate-wide error type.
//!
//! Everything fallible returns [`Result`]. The variants are grouped by what
//! the caller can do about them: configuration mistakes, malformed data,
//! degenerate inputs, and optimizer non-convergence (which carries the best
//! iterate found so the caller can inspect how far the solver got).

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Best iterate captured when a solver gives up.
///
/// `offset` is the bias for the two-class solver and the squared radius for
/// the one-class solver; `alphas` are the dual variables at the point the
/// sweep budget ran out.
#[derive(Debug, Clone)]
pub struct StalledSolution {
    pub alphas: Vec<f64>,
    pub offset: f64,
    pub objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("format error in {path:?}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("truncated payload in {path:?}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fold error: {0}")]
    Fold(String),

    #[error("size limit: {0}")]
    Size(String),

    #[error("tree construction: {0}")]
    Tree(String),

    #[error("case bundle: {0}")]
    Bundle(String),

    #[error("empty confusion matrix has no accuracy")]
    EmptyMatrix,

    #[error("data error: {0}")]
    Data(String),

    #[error(
        "no convergence after {sweeps} sweeps (max KKT violation {max_violation:.3e})",
        max_violation = solution.max_violation
    )]
    Convergence {
        sweeps: usize,
        solution: Box<StalledSolution>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
