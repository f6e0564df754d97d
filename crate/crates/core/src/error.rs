use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("point {0:?} lies outside the chart domain of model `{1}`")]
    OutOfDomain(Vec<f64>, &'static str),
    #[error("time {tau} is outside [0, {horizon}) for model `{model}`")]
    TimeOutOfRange {
        tau: f64,
        horizon: f64,
        model: &'static str,
    },
    #[error("trajectory left the chart domain at t = {0}")]
    DomainExit(f64),
    #[error("degenerate metric while orthonormalizing a frame")]
    DegenerateMetric,
    #[error("L-geodesic integration blew up at s = {0}")]
    BlowUp(f64),
    #[error("shooting failed (best endpoint residual {best_residual:e})")]
    ShootingFailed { best_residual: f64 },
    #[error("on L-cut locus: minimizing L-geodesic is not unique")]
    OnCutLocus,
    #[error("derivative undefined: {0}")]
    Undefined(&'static str),
    #[error("non-finite cost entry at ({0}, {1})")]
    NonFiniteCost(usize, usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("too many discarded trials: {discarded} of {total}")]
    TooManyDiscards { discarded: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, LabError>;
