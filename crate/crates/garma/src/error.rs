//! Error type shared across the crate.

use crate::model::ParamVector;

/// Errors produced by model evaluation, inference, forecasting and studies.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A model or configuration invariant was violated.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// An argument fell outside the valid domain of a family or function.
    #[error("{family}: {message}")]
    Domain {
        family: &'static str,
        message: String,
    },

    /// The linear-predictor recursion produced a non-finite value.
    /// `t` is the 1-based time index of the offending observation.
    #[error("linear predictor diverged at t = {t}; consider smaller AR/MA coefficients")]
    Divergence { t: usize },

    /// Vector or matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A chain or sample had no variation where variation is required.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The optimizer did not meet its stopping tolerance; carries the best
    /// point found so callers can inspect or retry.
    #[error("optimizer did not converge: {message}")]
    NonConvergence { message: String, best: ParamVector },

    /// The finite-difference Hessian was not positive definite; carries the
    /// mode and raw symmetric Hessian so callers can apply a ridge fallback.
    #[error("Hessian at the mode is not positive definite")]
    HessianNotPd {
        mode: ParamVector,
        hessian: nalgebra::DMatrix<f64>,
    },

    /// Every post-burn-in proposal was rejected.
    #[error("no proposals accepted after burn-in; try a different proposal_scale")]
    ZeroAcceptance,

    /// Too many replications or draws failed for the result to be trusted.
    #[error("{failed} of {total} {what} failed")]
    TooManyFailures {
        what: &'static str,
        failed: usize,
        total: usize,
    },

    /// Predictive-density enumeration or interval construction failed.
    #[error("forecast error: {0}")]
    Forecast(String),
}

pub type Result<T> = std::result::Result<T, Error>;
