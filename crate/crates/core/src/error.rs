//! Error type shared by every module.

use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid too small: truncated mass {mass} below 1 - 1e-8")]
    GridTooSmall { mass: f64 },
    #[error("relative velocity below 1e-14")]
    ZeroRelativeVelocity,
    #[error("singular pair at distance {distance} (gamma + 2 < 0, no cutoff)")]
    SingularPair { distance: f64 },
    #[error("second moment {m2} exceeds bound {bound}")]
    MomentBoundViolated { m2: f64, bound: f64 },
    #[error("exponent eta = {eta} outside (0, gamma + 3]")]
    InvalidExponent { eta: f64 },
    #[error("step diverged at t = {time}: |v| = {speed} exceeds {limit}")]
    StepDiverged { time: f64, speed: f64, limit: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("problem too large: {0}")]
    ProblemTooLarge(String),
    #[error("time {t} not below existence time {t_max}")]
    TimeTooLarge { t: f64, t_max: f64 },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
