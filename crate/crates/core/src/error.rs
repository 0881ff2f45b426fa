use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("times are not strictly increasing ({what} at index {index})")]
    NonMonotoneTimes { what: &'static str, index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariate path has no updates")]
    EmptyUpdates,

    #[error("time {t} is outside (0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("atom {0} has zero empirical norm on this timeline")]
    ZeroNormAtom(String),

    #[error("hawkes feature atom evaluated without jump history")]
    MissingHawkesState,

    #[error("dictionary has no atoms")]
    EmptyDictionary,

    #[error("log-intensity {value} exceeds the overflow guard")]
    NumericOverflow { value: f64 },

    #[error("timeline has no jumps")]
    NoJumps,

    #[error("validation timeline has no jumps")]
    EmptyValidation,

    #[error("uniform draw {0} is not in (0, 1)")]
    InvalidUniform(f64),

    #[error("likelihood is not finite")]
    NonFiniteLikelihood,

    #[error("covariance matrix is not positive definite (rho = {rho})")]
    CholeskyFailure { rho: f64 },

    #[error("hawkes excitation {z} exceeded the ceiling {ceiling}")]
    ExplosionGuard { z: f64, ceiling: f64 },

    #[error("event time {t} cannot be advanced by the next duration in double precision")]
    TimeResolution { t: f64 },

    #[error("models agree on every jump; the likelihood-ratio test is undefined")]
    ZeroVariance,

    #[error("truth is constant on the evaluation jumps")]
    DegenerateDenominator,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
