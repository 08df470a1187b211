//! Bayesian GARMA models for count time series.
//!
//! Supports Poisson, binomial and negative binomial conditional
//! distributions with an ARMA-style recursion on the link scale, a
//! block independence Metropolis-Hastings sampler centred at the
//! posterior mode, Bayesian selection criteria (EBIC, DIC, CPO/LPML),
//! discrete predictive densities with percentile or HPD intervals,
//! convergence and residual diagnostics, and a Monte-Carlo study
//! harness for parameter recovery and order-selection experiments.

pub mod criteria;
pub mod diagnostics;
pub mod error;
pub mod forecast;
pub mod inference;
pub mod model;
mod optim;
pub mod simulate;
pub mod study;

pub use error::{Error, Result};
pub use inference::{
    acceptance_rate, find_mode_and_hessian, log_posterior, log_prior, mh_sample,
    mh_sample_with_proposal, McmcConfig, PosteriorSample, PriorSpec,
};
pub use model::{
    clamp_counts, design_matrix, inverse_link, linear_predictor_pass, link, log_density,
    log_partial_likelihood, CountSeries, CovariateKind, Evaluator, Family, ModelSpec, ParamVector,
    PredictorForm, PredictorState,
};
