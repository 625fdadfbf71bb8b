use thiserror::Error;

use crate::integrator::TrajectoryRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An integrated trajectory left the set of physical states. The record
    /// up to (and excluding) the offending step is kept for diagnostics.
    #[error("invariant breach at t = {t}: {detail}")]
    InvariantBreach {
        t: f64,
        detail: String,
        partial: Box<TrajectoryRecord>,
    },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
}
