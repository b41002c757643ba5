use thiserror::Error;

/// Errors produced by the sampler library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid range for {name}: {reason}")]
    InvalidRange { name: &'static str, reason: String },

    #[error("invalid timestep {t} (schedule has {steps} steps)")]
    InvalidTimestep { t: usize, steps: usize },

    #[error("timestep ordering violated: t_prev = {t_prev} must be < t = {t}")]
    TimestepOrder { t: usize, t_prev: usize },

    #[error("unknown condition label {0}")]
    UnknownLabel(u32),

    #[error("alpha_bar is zero at timestep {0}")]
    DegenerateAlpha(usize),

    #[error("non-finite iterate at Langevin step {step} (tau = {tau})")]
    NonFinite { step: usize, tau: usize },

    #[error("operator/mode mismatch: {0}")]
    OperatorMode(String),

    #[error("dimension {dim} too large for quadrature (max {max})")]
    QuadratureDimension { dim: usize, max: usize },

    #[error("signal has no 2D lattice shape or the shapes differ")]
    ShapeMismatch,

    #[error("config error: {0}")]
    Config(String),

    #[error("record parse error: {0}")]
    Record(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
