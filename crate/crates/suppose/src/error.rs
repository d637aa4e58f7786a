//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid source set: {0}")]
    InvalidSources(String),

    #[error("invalid IRF model: {0}")]
    InvalidIrf(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("truncation infeasible: need {needed} sources but rounding forces {forced} (deficit {deficit})")]
    TruncationInfeasible {
        needed: usize,
        forced: usize,
        deficit: usize,
    },

    #[error("degenerate least-squares basis: {0}")]
    DegenerateBasis(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("fit did not converge: {0}")]
    NoConvergence(String),

    #[error("bound machinery undefined: {0}")]
    BoundUndefined(String),

    #[error("evaluation requires equal source counts: {left} vs {right}")]
    UnequalSourceCounts { left: usize, right: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
