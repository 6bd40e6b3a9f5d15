use thiserror::Error;

use crate::loops::DiscreteLoop;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain of chart `{chart}`")]
    OutsideDomain { chart: String, point: Vec<f64> },

    #[error("tangent vectors span a degenerate plane (denominator {denominator:e})")]
    DegeneratePlane { denominator: f64 },

    #[error("trajectory left the domain of chart `{chart}` at time {time}")]
    DomainEscape { chart: String, time: f64 },

    #[error("segment {segment} has chart length {length} above the cap {cap}; refine the loop")]
    RefineNeeded { segment: usize, length: f64, cap: f64 },

    #[error("descent stopped after {iterations} iterations with gradient norm {gradient_norm:e}")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        last: Box<DiscreteLoop>,
    },

    #[error("sweepout family tore at round {round}: {reason}")]
    FamilyTear { round: usize, reason: String },

    #[error("loop does not close up as a geodesic (closure defect {defect:e})")]
    NotAGeodesic { defect: f64 },

    #[error("det B vanishes on the whole interval [{start}, {end}]")]
    DegenerateInterval { start: f64, end: f64 },

    #[error("only {accepted} of {requested} segments stayed outside r <= {k_radius} after {attempts} attempts")]
    SamplingStarvation {
        requested: usize,
        accepted: usize,
        attempts: usize,
        k_radius: f64,
    },

    #[error("cross-check failed: {0}")]
    OracleMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
