use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("weights must be finite, nonnegative and not all zero")]
    EmptyMass,

    #[error("symbol sets differ: {0}")]
    SymbolMismatch(String),

    #[error("invalid distortion model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter family: {0}")]
    InvalidFamily(String),

    #[error("lambda must be <= 0, got {0}")]
    PositiveLambda(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not bracket distortion {target}: reachable range is [{low}, {high}]")]
    Bracket { target: f64, low: f64, high: f64 },

    #[error("real-valued sample given to a finite-alphabet estimator; quantize it first")]
    ContinuousSample,

    #[error("distortion {0} is not representable on a rational grid; coarsen the model")]
    NotGridRepresentable(f64),

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("block alphabet too large: {0} states (limit {1})")]
    BlockAlphabet(usize, usize),

    #[error("infeasible distortion {0}")]
    Infeasible(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
