//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension {dim} exceeds dense-assembly limit {limit}; use term-wise evolution instead")]
    DimensionOverLimit { dim: usize, limit: usize },

    #[error("state vector is not normalized (|ψ|₂ = {norm})")]
    NotNormalized { norm: f64 },

    #[error(
        "time step {dt:.3e} s is not below the shortest local timescale {limit:.3e} s; \
         halve it or opt in with `allow_large_dt`"
    )]
    TimeStepTooLarge { dt: f64, limit: f64 },

    #[error("subspace selection matches no basis states")]
    EmptySubspace,

    #[error("hyperfine frame rotation not applicable: {0}")]
    FrameRotation(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("quadrature failed: {0}")]
    QuadratureFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
