//! Error type shared by all qrem-core modules.

use thiserror::Error;

/// Failures surfaced by the core pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid angle vector: {0}")]
    InvalidAngles(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("calibration is missing basis-state column {index}")]
    MissingBasisColumn { index: usize },

    #[error("response matrix is singular (spectral norm {sigma_max:.3e}); no usable pseudo-inverse")]
    SingularMatrix { sigma_max: f64 },

    #[error(
        "least-squares solver did not converge after {iterations} iterations \
         (residual {residual:.3e})"
    )]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("training produced a non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("improvement ratio undefined: the NN error is exactly zero")]
    NnExact,

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for numerical breakdowns (solver divergence, NaN loss), as opposed
    /// to rejected inputs or I/O trouble. The CLI maps this to exit code 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::SolverDiverged { .. }
                | Error::NonFiniteLoss { .. }
        )
    }
}
