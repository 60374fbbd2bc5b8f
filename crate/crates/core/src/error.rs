use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curves live on different grids")]
    GridMismatch,

    #[error("basis is not orthonormal (max Gram deviation {max_deviation:.3e})")]
    NonOrthonormalBasis { max_deviation: f64 },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("no convergence after {iterations} iterations (last iterate {last}, residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },

    #[error("every residual curve is numerically zero at component {step}")]
    AllDegenerate { step: usize },

    #[error("basis is rank deficient at element {index}")]
    RankDeficientBasis { index: usize },

    #[error("invalid basis dimension: {0}")]
    InvalidDimension(String),

    #[error("estimated direction has zero norm")]
    ZeroEstimate,
}

pub type Result<T> = std::result::Result<T, Error>;
