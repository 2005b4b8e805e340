use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("3x3 SVD did not converge")]
    SvdNotConverged,

    #[error("SO(3) normalizer underflowed to {value} for spectrum ({s1}, {s2}, {s3})")]
    FactorUnderflow {
        value: f64,
        s1: f64,
        s2: f64,
        s3: f64,
    },

    #[error("all log-sum-exp weights are zero")]
    ZeroWeights,

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("flow time t = {0} must lie in [0, 1)")]
    TimeOutOfRange(f64),

    #[error("conformer ensemble is empty")]
    EmptyEnsemble,

    #[error("effective sample size {ess:.2} below 10; increase num_samples")]
    LowEffectiveSampleSize { ess: f64 },

    #[error("degenerate covariance (rank {rank} < 2); rotation is not unique")]
    DegenerateCovariance { rank: usize },

    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
