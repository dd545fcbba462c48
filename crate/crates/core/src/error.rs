use thiserror::Error;

/// Errors produced by the calibration engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("fit did not converge after {iterations} iterations (last params {last:?})")]
    Convergence { iterations: usize, last: Vec<f64> },

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("no visible keypoints")]
    NoObservation,

    #[error("ill-conditioned innovation covariance")]
    Conditioning,

    #[error("non-finite activation in recurrent estimator; step rolled back")]
    NumericalOverflow,

    #[error("invalid goal: regressed depth {0} is not positive")]
    InvalidGoal(f64),

    #[error("Riccati iteration did not converge after {0} sweeps")]
    RiccatiConvergence(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
