use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown kernel profile `{0}` (expected parabolic, cosine or indicator)")]
    UnknownProfile(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unstable step size: norm {norm:.3e} exceeded bound {bound:.3e} at t = {time}")]
    UnstableStep { norm: f64, bound: f64, time: f64 },

    #[error("power iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("weight data error: {0}")]
    WeightData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
