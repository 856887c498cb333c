use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("paths live on different grids")]
    GridMismatch,

    #[error("bandwidth {eps} is under-resolved at step {h} (floor is 2h)")]
    UnderResolved { eps: f64, h: f64 },

    #[error(
        "kernel half-width {half_width} exceeds the flank length {flank}; widen the grid flanks"
    )]
    KernelWindowExceedsDomain { half_width: f64, flank: f64 },

    #[error("operation requires a boundary-extended path")]
    NotExtended,

    #[error("{0} has no time-domain kernel; it is applied spectrally")]
    NoTimeDomainKernel(&'static str),

    #[error("unknown closed-loop map `{0}`")]
    UnknownMap(String),

    #[error("operation not defined for model kind {0}")]
    WrongModelKind(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("volatility vanishes on the hedging window")]
    VanishingSigma,

    #[error("exponent q = {0} must be >= 1")]
    InvalidExponent(f64),

    #[error("empty interval")]
    EmptyInterval,

    #[error("empty sample")]
    EmptySample,

    #[error("observation design invalid: {0}")]
    InvalidObservation(String),

    #[error("zero-norm reference series")]
    ZeroNormTruth,

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
