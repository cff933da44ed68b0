use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The closed-loop coefficient `a + b f` is not strictly inside (-1, 1).
    #[error("closed loop a + b*f = {closed_loop} is not stable")]
    Unstable { closed_loop: f64 },
    #[error("no gain stabilizes every model in the box")]
    EmptyInterval,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("gain {f} lies outside [{lo}, {hi}]")]
    OutOfDomain { f: f64, lo: f64, hi: f64 },
    #[error("covariance matrix is not positive definite (last jitter {jitter:e})")]
    Factorization { jitter: f64 },
    #[error("posterior variance {0:e} is negative beyond tolerance")]
    NegativeVariance(f64),
    #[error("quadrature self-check failed (relative deviation {0:e})")]
    Quadrature(f64),
    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
