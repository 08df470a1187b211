//! Priors, posterior evaluation, mode/Hessian proposal construction and the
//! block independence Metropolis-Hastings sampler.
//!
//! Proposals are drawn once per iteration for the whole parameter vector
//! from a multivariate normal centred at the posterior mode with covariance
//! `proposal_scale * H^{-1}`, `H` the finite-difference observed information
//! at the mode. Because the proposal does not depend on the current state,
//! the acceptance probability includes the proposal-density ratio
//! `q(current)/q(proposed)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{CountSeries, Evaluator, ModelSpec, ParamVector};
use crate::optim::nelder_mead;

/// Independent Gaussian priors for the three parameter blocks, each with a
/// common variance (identity covariance scaling).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorSpec {
    pub mean_beta: Vec<f64>,
    pub var_beta: f64,
    pub mean_phi: Vec<f64>,
    pub var_phi: f64,
    pub mean_theta: Vec<f64>,
    pub var_theta: f64,
}

impl PriorSpec {
    /// Near-flat default: every block centred at zero with variance 200.
    pub fn default_for(spec: &ModelSpec) -> Self {
        PriorSpec {
            mean_beta: vec![0.0; spec.n_beta()],
            var_beta: 200.0,
            mean_phi: vec![0.0; spec.p],
            var_phi: 200.0,
            mean_theta: vec![0.0; spec.q],
            var_theta: 200.0,
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.mean_beta.len() != spec.n_beta()
            || self.mean_phi.len() != spec.p
            || self.mean_theta.len() != spec.q
        {
            return Err(Error::ShapeMismatch(format!(
                "prior means ({}, {}, {}) do not match model blocks ({}, {}, {})",
                self.mean_beta.len(),
                self.mean_phi.len(),
                self.mean_theta.len(),
                spec.n_beta(),
                spec.p,
                spec.q
            )));
        }
        for (v, what) in [
            (self.var_beta, "var_beta"),
            (self.var_phi, "var_phi"),
            (self.var_theta, "var_theta"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "{what} must be a positive real, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Prior means in flat `beta | phi | theta` order.
    pub fn mean_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.mean_beta);
        v.extend_from_slice(&self.mean_phi);
        v.extend_from_slice(&self.mean_theta);
        v
    }

    fn dim(&self) -> usize {
        self.mean_beta.len() + self.mean_phi.len() + self.mean_theta.len()
    }

    fn block_log_density(values: &[f64], means: &[f64], var: f64) -> f64 {
        let ln_norm = -0.5 * (std::f64::consts::TAU * var).ln();
        values
            .iter()
            .zip(means)
            .map(|(v, m)| ln_norm - (v - m) * (v - m) / (2.0 * var))
            .sum()
    }

    fn log_density_flat(&self, flat: &[f64]) -> f64 {
        let (beta, rest) = flat.split_at(self.mean_beta.len());
        let (phi, theta) = rest.split_at(self.mean_phi.len());
        Self::block_log_density(beta, &self.mean_beta, self.var_beta)
            + Self::block_log_density(phi, &self.mean_phi, self.var_phi)
            + Self::block_log_density(theta, &self.mean_theta, self.var_theta)
    }
}

/// Gaussian log prior density including normalizing constants.
pub fn log_prior(prior: &PriorSpec, params: &ParamVector) -> Result<f64> {
    if params.beta.len() != prior.mean_beta.len()
        || params.phi.len() != prior.mean_phi.len()
        || params.theta.len() != prior.mean_theta.len()
    {
        return Err(Error::ShapeMismatch(
            "parameter blocks do not match prior blocks".into(),
        ));
    }
    Ok(prior.log_density_flat(&params.to_flat()))
}

/// `log_partial_likelihood + log_prior`; divergent or invalid parameter
/// values map to negative infinity so samplers treat them as rejections.
pub fn log_posterior(
    spec: &ModelSpec,
    prior: &PriorSpec,
    params: &ParamVector,
    series: &CountSeries,
) -> f64 {
    let eval = match Evaluator::new(spec, series) {
        Ok(e) => e,
        Err(_) => return f64::NEG_INFINITY,
    };
    match eval.log_partial_likelihood(params) {
        Ok(ll) => ll + prior.log_density_flat(&params.to_flat()),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Sampler bookkeeping: total post-burn-in proposals, burn-in length,
/// thinning interval, seed and a multiplier on the proposal covariance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub proposal_scale: f64,
}

impl McmcConfig {
    /// 15000 post-burn-in proposals, burn-in 1000, thin 3 (5000 retained
    /// draws), unit proposal scale.
    pub fn new(seed: u64) -> Self {
        McmcConfig {
            iterations: 15_000,
            burn_in: 1000,
            thin: 3,
            seed,
            proposal_scale: 1.0,
        }
    }

    pub fn with_proposal_scale(mut self, scale: f64) -> Self {
        self.proposal_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin < 1 {
            return Err(Error::InvalidSpec("thin must be >= 1".into()));
        }
        if self.iterations < self.thin {
            return Err(Error::InvalidSpec(
                "iterations must be at least the thinning interval".into(),
            ));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "proposal_scale must be a positive real, got {}",
                self.proposal_scale
            )));
        }
        Ok(())
    }

    /// Retained draw count `floor(iterations / thin)`.
    pub fn retained(&self) -> usize {
        self.iterations / self.thin
    }
}

/// Retained MCMC draws plus everything needed to reuse or audit the chain.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    draws: Vec<f64>,
    dim: usize,
    n_beta: usize,
    n_phi: usize,
    /// Accepted proposals after burn-in.
    pub accept_count: usize,
    /// Total proposals after burn-in.
    pub total_proposals: usize,
    /// Posterior mode found by the optimizer.
    pub map_estimate: ParamVector,
    /// Covariance actually used by the proposal (scale included).
    pub proposal_cov: DMatrix<f64>,
}

impl PosteriorSample {
    /// Wraps an existing row-major `Q x dim` draw matrix; used by tests and
    /// by code paths that build samples directly.
    pub fn from_draws(draws: Vec<f64>, spec: &ModelSpec) -> Result<Self> {
        let dim = spec.dim();
        if dim == 0 || draws.is_empty() || draws.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!(
                "draw matrix of {} entries is not a multiple of dim {dim}",
                draws.len()
            )));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(
                "draw matrix contains non-finite entries".into(),
            ));
        }
        let mut sample = PosteriorSample {
            draws,
            dim,
            n_beta: spec.n_beta(),
            n_phi: spec.p,
            accept_count: 0,
            total_proposals: 0,
            map_estimate: ParamVector::zeros(spec),
            proposal_cov: DMatrix::identity(dim, dim),
        };
        sample.map_estimate = sample.posterior_mean();
        Ok(sample)
    }

    pub fn q_retained(&self) -> usize {
        self.draws.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Flat `beta | phi | theta` row of draw `j`.
    pub fn draw(&self, j: usize) -> &[f64] {
        &self.draws[j * self.dim..(j + 1) * self.dim]
    }

    pub fn param(&self, j: usize) -> ParamVector {
        let row = self.draw(j);
        let (beta, rest) = row.split_at(self.n_beta);
        let (phi, theta) = rest.split_at(self.n_phi);
        ParamVector::new(beta.to_vec(), phi.to_vec(), theta.to_vec())
    }

    pub fn posterior_mean_flat(&self) -> Vec<f64> {
        let q = self.q_retained() as f64;
        let mut mean = vec![0.0; self.dim];
        for j in 0..self.q_retained() {
            for (m, v) in mean.iter_mut().zip(self.draw(j)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= q);
        mean
    }

    pub fn posterior_mean(&self) -> ParamVector {
        let mean = self.posterior_mean_flat();
        let (beta, rest) = mean.split_at(self.n_beta);
        let (phi, theta) = rest.split_at(self.n_phi);
        ParamVector::new(beta.to_vec(), phi.to_vec(), theta.to_vec())
    }

    /// Per-parameter sample variance of the draws (unbiased).
    pub fn posterior_variance_flat(&self) -> Vec<f64> {
        let q = self.q_retained();
        let mean = self.posterior_mean_flat();
        let mut var = vec![0.0; self.dim];
        for j in 0..q {
            for ((v, d), m) in var.iter_mut().zip(self.draw(j)).zip(&mean) {
                *v += (d - m) * (d - m);
            }
        }
        let denom = (q.max(2) - 1) as f64;
        var.iter_mut().for_each(|v| *v /= denom);
        var
    }

    /// All retained values of parameter `k`, in chain order.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.q_retained()).map(|j| self.draw(j)[k]).collect()
    }

    /// Linear-interpolation quantile of parameter `k` at level `p`.
    pub fn column_quantile(&self, k: usize, p: f64) -> f64 {
        let mut vals = self.column(k);
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = p.clamp(0.0, 1.0) * (vals.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        vals[lo] + (h - lo as f64) * (vals[hi] - vals[lo])
    }
}

/// Fraction of accepted post-burn-in proposals.
pub fn acceptance_rate(sample: &PosteriorSample) -> f64 {
    if sample.total_proposals == 0 {
        return 0.0;
    }
    sample.accept_count as f64 / sample.total_proposals as f64
}

/// Finite-difference step for second derivatives: `eps^(1/4) * (1 + |x|)`.
fn hessian_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * (1.0 + x.abs())
}

fn fd_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let f0 = f(x);
    let mut h = DMatrix::zeros(d, d);
    let steps: Vec<f64> = x.iter().map(|&v| hessian_step(v)).collect();
    let mut xp = x.to_vec();
    for i in 0..d {
        let hi = steps[i];
        xp.copy_from_slice(x);
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            xp.copy_from_slice(x);
            xp[i] = x[i] + hi;
            xp[j] = x[j] + hj;
            let fpp = f(&xp);
            xp[j] = x[j] - hj;
            let fpm = f(&xp);
            xp[i] = x[i] - hi;
            xp[j] = x[j] + hj;
            let fmp = f(&xp);
            xp[j] = x[j] - hj;
            let fmm = f(&xp);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Adds `eps * I`, doubling `eps`, until the matrix admits a Cholesky
/// factorization. Keeps the sampler runnable on flat directions.
pub(crate) fn ridge_to_pd(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    if let Some(chol) = Cholesky::new(h.clone()) {
        return Ok((h.clone(), chol));
    }
    let max_diag = (0..h.nrows())
        .map(|i| h[(i, i)].abs())
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let mut eps = 1e-6 * max_diag;
    for _ in 0..128 {
        let mut ridged = h.clone();
        for i in 0..h.nrows() {
            ridged[(i, i)] += eps;
        }
        if let Some(chol) = Cholesky::new(ridged.clone()) {
            return Ok((ridged, chol));
        }
        eps *= 2.0;
    }
    Err(Error::Degenerate(
        "Hessian could not be regularized to positive definite".into(),
    ))
}

/// Locates the posterior mode by multi-start Nelder-Mead and returns it with
/// the central finite-difference negative Hessian of the log posterior
/// (symmetrized). A non-positive-definite Hessian is reported as
/// [`Error::HessianNotPd`] carrying both values so callers can apply the
/// ridge fallback.
pub fn find_mode_and_hessian(
    spec: &ModelSpec,
    prior: &PriorSpec,
    series: &CountSeries,
    init: &ParamVector,
) -> Result<(ParamVector, DMatrix<f64>)> {
    spec.validate()?;
    prior.validate(spec)?;
    init.conforms(spec)?;
    let eval = Evaluator::new(spec, series)?;

    let objective = |flat: &[f64]| -> f64 {
        match eval.log_partial_likelihood_flat(flat) {
            Ok(ll) => -(ll + prior.log_density_flat(flat)),
            Err(_) => f64::INFINITY,
        }
    };

    let mut starts: Vec<Vec<f64>> = vec![init.to_flat(), prior.mean_flat(), vec![0.0; spec.dim()]];
    starts.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for start in &starts {
        let out = nelder_mead(&objective, start, 0.25, 1e-12, 1e-7, 4000);
        if best.as_ref().map_or(true, |(_, f, _)| out.f < *f) {
            best = Some((out.x, out.f, out.converged));
        }
    }
    let (mut x, mut fx, mut converged) = best.unwrap();

    // Restart the simplex at the incumbent until it stops improving.
    for _ in 0..3 {
        let out = nelder_mead(&objective, &x, 0.05, 1e-12, 1e-8, 2000);
        let improved = out.f < fx - 1e-10 * (1.0 + fx.abs());
        if out.f <= fx {
            x = out.x;
            fx = out.f;
            converged = converged || out.converged;
        }
        if !improved {
            break;
        }
    }

    let mode = ParamVector::from_flat(&x, spec)?;
    if !converged || !fx.is_finite() {
        return Err(Error::NonConvergence {
            message: format!("simplex tolerance not met (best objective {fx})"),
            best: mode,
        });
    }

    // Observed information: negative second derivative of the log posterior,
    // i.e. the plain Hessian of the minimized objective.
    let mut hessian = fd_hessian(&objective, &x);
    let sym = (hessian.transpose() + &hessian) * 0.5;
    hessian = sym;
    if Cholesky::new(hessian.clone()).is_none() {
        return Err(Error::HessianNotPd { mode, hessian });
    }
    Ok((mode, hessian))
}

/// Draws from the posterior with an independence Metropolis-Hastings chain
/// whose proposal is `N(mode, proposal_scale * H^{-1})`.
///
/// Applies the ridge fallback automatically when the Hessian is not positive
/// definite. Deterministic given `mcmc.seed`.
pub fn mh_sample(
    spec: &ModelSpec,
    prior: &PriorSpec,
    series: &CountSeries,
    mcmc: &McmcConfig,
) -> Result<PosteriorSample> {
    let init = ParamVector::from_flat(&prior.mean_flat(), spec)?;
    let (mode, hessian) = match find_mode_and_hessian(spec, prior, series, &init) {
        Ok(pair) => pair,
        Err(Error::HessianNotPd { mode, hessian }) => {
            let (ridged, _) = ridge_to_pd(&hessian)?;
            (mode, ridged)
        }
        Err(e) => return Err(e),
    };
    let (_, chol) = ridge_to_pd(&hessian)?;
    let mut cov = chol.inverse() * mcmc.proposal_scale;
    let sym = (cov.transpose() + &cov) * 0.5;
    cov = sym;
    mh_sample_with_proposal(spec, prior, series, mcmc, &mode, &cov)
}

/// Independence MH with an explicit Gaussian proposal `N(center, cov)`.
///
/// Exposed so studies can reuse a proposal and tests can pin the proposal to
/// a known distribution.
pub fn mh_sample_with_proposal(
    spec: &ModelSpec,
    prior: &PriorSpec,
    series: &CountSeries,
    mcmc: &McmcConfig,
    center: &ParamVector,
    cov: &DMatrix<f64>,
) -> Result<PosteriorSample> {
    spec.validate()?;
    prior.validate(spec)?;
    mcmc.validate()?;
    center.conforms(spec)?;
    let eval = Evaluator::new(spec, series)?;
    let d = spec.dim();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::ShapeMismatch(format!(
            "proposal covariance is {}x{}, expected {d}x{d}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let (cov, chol) = ridge_to_pd(cov)?;
    let lower = chol.l();

    let log_post = |flat: &[f64]| -> f64 {
        match eval.log_partial_likelihood_flat(flat) {
            Ok(ll) => ll + prior.log_density_flat(flat),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let center_flat = center.to_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
    let mut current = center_flat.clone();
    let mut lp_cur = log_post(&current);
    // Proposal log density up to the common Gaussian constant; the chain
    // starts at the proposal centre where the quadratic form is zero.
    let mut lq_cur = 0.0_f64;

    let q_target = mcmc.retained();
    let mut draws = Vec::with_capacity(q_target * d);
    let mut accept_count = 0usize;
    let mut z = DVector::zeros(d);
    let mut proposal = vec![0.0_f64; d];
    let total = mcmc.burn_in + mcmc.iterations;

    for step in 0..total {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let shift = &lower * &z;
        for ((pr, c), s) in proposal.iter_mut().zip(&center_flat).zip(shift.iter()) {
            *pr = c + s;
        }
        let lq_prop = -0.5 * z.dot(&z);
        let lp_prop = log_post(&proposal);
        let log_ratio = (lp_prop - lq_prop) - (lp_cur - lq_cur);
        let u: f64 = rng.random();
        let accepted = u.ln() < log_ratio;
        if accepted {
            current.copy_from_slice(&proposal);
            lp_cur = lp_prop;
            lq_cur = lq_prop;
        }
        if step >= mcmc.burn_in {
            if accepted {
                accept_count += 1;
            }
            if (step - mcmc.burn_in + 1) % mcmc.thin == 0 {
                draws.extend_from_slice(&current);
            }
        }
    }

    if accept_count == 0 {
        return Err(Error::ZeroAcceptance);
    }
    Ok(PosteriorSample {
        draws,
        dim: d,
        n_beta: spec.n_beta(),
        n_phi: spec.p,
        accept_count,
        total_proposals: mcmc.iterations,
        map_estimate: center.clone(),
        proposal_cov: cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CovariateKind, Family};
    use crate::simulate::{simulate_series, SimConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn poisson_spec() -> ModelSpec {
        ModelSpec::new(Family::Poisson, 0, 0)
    }

    fn series_of(y: Vec<u64>) -> CountSeries {
        CountSeries::from_counts(y, &[CovariateKind::Intercept], 1).unwrap()
    }

    #[test]
    fn log_prior_at_mode_is_normalizing_constant() {
        let spec = ModelSpec::new(Family::Poisson, 1, 1);
        let mut prior = PriorSpec::default_for(&spec);
        prior.var_beta = 1.0;
        prior.var_phi = 1.0;
        prior.var_theta = 1.0;
        let params = ParamVector::zeros(&spec);
        let d = spec.dim() as f64;
        assert_relative_eq!(
            log_prior(&prior, &params).unwrap(),
            -(d / 2.0) * std::f64::consts::TAU.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_prior_single_beta_hand_value() {
        let spec = poisson_spec();
        let prior = PriorSpec::default_for(&spec);
        let params = ParamVector::new(vec![1.0], vec![], vec![]);
        let expected = -0.5 * (std::f64::consts::TAU * 200.0).ln() - 1.0 / 400.0;
        assert_relative_eq!(log_prior(&prior, &params).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn log_prior_depends_only_on_offset_from_means() {
        let spec = ModelSpec::new(Family::Poisson, 2, 1);
        let mut prior = PriorSpec::default_for(&spec);
        prior.mean_beta = vec![0.3];
        prior.mean_phi = vec![-0.5, 0.2];
        prior.mean_theta = vec![1.0];
        let offset = ParamVector::new(vec![0.7], vec![0.1, -0.4], vec![0.25]);
        let shifted = ParamVector::new(
            vec![prior.mean_beta[0] + offset.beta[0]],
            prior
                .mean_phi
                .iter()
                .zip(&offset.phi)
                .map(|(m, o)| m + o)
                .collect(),
            vec![prior.mean_theta[0] + offset.theta[0]],
        );
        let zero_mean = PriorSpec {
            mean_beta: vec![0.0],
            mean_phi: vec![0.0, 0.0],
            mean_theta: vec![0.0],
            ..prior.clone()
        };
        assert_relative_eq!(
            log_prior(&prior, &shifted).unwrap(),
            log_prior(&zero_mean, &offset).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_prior_shape_mismatch() {
        let spec = poisson_spec();
        let prior = PriorSpec::default_for(&spec);
        let params = ParamVector::new(vec![0.0, 0.0], vec![], vec![]);
        assert!(log_prior(&prior, &params).is_err());
    }

    #[test]
    fn log_posterior_is_likelihood_plus_prior() {
        let spec = poisson_spec();
        let prior = PriorSpec::default_for(&spec);
        let series = series_of(vec![2, 4, 1, 3]);
        let params = ParamVector::new(vec![0.9], vec![], vec![]);
        let lp = log_posterior(&spec, &prior, &params, &series);
        let expected = crate::model::log_partial_likelihood(&spec, &params, &series).unwrap()
            + log_prior(&prior, &params).unwrap();
        assert_relative_eq!(lp, expected, epsilon = 1e-12);
    }

    #[test]
    fn log_posterior_flat_prior_matches_likelihood_differences() {
        let spec = poisson_spec();
        let mut prior = PriorSpec::default_for(&spec);
        prior.var_beta = 1e12;
        let series = series_of(vec![2, 4, 1, 3]);
        let a = ParamVector::new(vec![0.5], vec![], vec![]);
        let b = ParamVector::new(vec![1.1], vec![], vec![]);
        let post_diff =
            log_posterior(&spec, &prior, &a, &series) - log_posterior(&spec, &prior, &b, &series);
        let lik_diff = crate::model::log_partial_likelihood(&spec, &a, &series).unwrap()
            - crate::model::log_partial_likelihood(&spec, &b, &series).unwrap();
        assert_abs_diff_eq!(post_diff, lik_diff, epsilon = 1e-6);
    }

    #[test]
    fn log_posterior_divergence_maps_to_neg_infinity() {
        let spec = ModelSpec::new(Family::Poisson, 1, 0);
        let prior = PriorSpec::default_for(&spec);
        let series = series_of(vec![900, 900, 900]);
        let params = ParamVector::new(vec![0.0], vec![400.0], vec![]);
        assert_eq!(
            log_posterior(&spec, &prior, &params, &series),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn mode_matches_poisson_mle() {
        // With a flat prior the mode of the intercept-only Poisson model is
        // log of the sample mean.
        let spec = poisson_spec();
        let mut prior = PriorSpec::default_for(&spec);
        prior.var_beta = 1e12;
        let y: Vec<u64> = vec![3, 5, 4, 6, 2, 7, 5, 4, 3, 6];
        let ybar = y.iter().sum::<u64>() as f64 / y.len() as f64;
        let series = series_of(y);
        let (mode, hessian) =
            find_mode_and_hessian(&spec, &prior, &series, &ParamVector::zeros(&spec)).unwrap();
        assert_abs_diff_eq!(mode.beta[0], ybar.ln(), epsilon = 1e-4);
        // Observed information for the log-link Poisson: n * exp(beta0).
        assert_relative_eq!(hessian[(0, 0)], 10.0 * ybar, max_relative = 1e-3);
    }

    #[test]
    fn hessian_recovers_gaussian_inverse_covariance() {
        // With an empty likelihood window (n = r) the posterior is exactly
        // the Gaussian prior, so the Hessian must be the inverse covariance.
        let spec = ModelSpec::new(Family::Poisson, 1, 0);
        let mut prior = PriorSpec::default_for(&spec);
        prior.var_beta = 4.0;
        prior.var_phi = 0.25;
        let series = series_of(vec![3]);
        let (mode, hessian) =
            find_mode_and_hessian(&spec, &prior, &series, &ParamVector::zeros(&spec)).unwrap();
        assert_abs_diff_eq!(mode.beta[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mode.phi[0], 0.0, epsilon = 1e-6);
        assert_relative_eq!(hessian[(0, 0)], 0.25, max_relative = 1e-4);
        assert_relative_eq!(hessian[(1, 1)], 4.0, max_relative = 1e-4);
        assert_abs_diff_eq!(hessian[(0, 1)], 0.0, epsilon = 1e-4);
    }

    #[test]
    fn garma_mode_near_truth_on_simulated_data() {
        let spec = ModelSpec::new(Family::NegativeBinomial { dispersion_k: 15.0 }, 1, 1);
        let truth = ParamVector::new(vec![0.8], vec![0.5], vec![0.3]);
        let series =
            simulate_series(&SimConfig::new(spec.clone(), truth.clone(), 1000, 11)).unwrap();
        let prior = PriorSpec::default_for(&spec);
        let (mode, _) =
            find_mode_and_hessian(&spec, &prior, &series, &ParamVector::zeros(&spec)).unwrap();
        for (m, t) in mode.to_flat().iter().zip(truth.to_flat()) {
            assert!((m - t).abs() < 0.15, "mode {m} vs truth {t}");
        }
    }

    #[test]
    fn ridge_fallback_makes_indefinite_matrices_usable() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let (ridged, _) = ridge_to_pd(&h).unwrap();
        assert!(Cholesky::new(ridged).is_some());
    }

    #[test]
    fn prior_only_target_with_prior_proposal_accepts_everything() {
        // With an empty likelihood window the posterior equals the prior;
        // proposing from that same prior makes the MH ratio exactly one.
        let spec = ModelSpec::new(Family::Poisson, 1, 0);
        let prior = PriorSpec {
            mean_beta: vec![0.4],
            var_beta: 2.0,
            mean_phi: vec![-0.2],
            var_phi: 0.5,
            mean_theta: vec![],
            var_theta: 1.0,
        };
        let series = series_of(vec![3]);
        let mcmc = McmcConfig {
            iterations: 3000,
            burn_in: 100,
            thin: 3,
            seed: 21,
            proposal_scale: 1.0,
        };
        let center = ParamVector::new(vec![0.4], vec![-0.2], vec![]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let sample = mh_sample_with_proposal(&spec, &prior, &series, &mcmc, &center, &cov).unwrap();
        assert_eq!(acceptance_rate(&sample), 1.0);
        assert_eq!(sample.q_retained(), 1000);
    }

    #[test]
    fn retained_count_and_reproducibility() {
        let spec = poisson_spec();
        let prior = PriorSpec::default_for(&spec);
        let series = series_of(vec![4, 2, 5, 3, 6, 4, 3, 5, 4, 2, 6, 5]);
        let mcmc = McmcConfig {
            iterations: 2000,
            burn_in: 200,
            thin: 3,
            seed: 77,
            proposal_scale: 1.0,
        };
        let a = mh_sample(&spec, &prior, &series, &mcmc).unwrap();
        assert_eq!(a.q_retained(), 2000 / 3);
        assert!(a.draw(0).iter().all(|v| v.is_finite()));
        let b = mh_sample(&spec, &prior, &series, &mcmc).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.accept_count, b.accept_count);
        // Proposal covariance is symmetric to tight tolerance.
        for i in 0..a.proposal_cov.nrows() {
            for j in 0..a.proposal_cov.ncols() {
                assert!((a.proposal_cov[(i, j)] - a.proposal_cov[(j, i)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn acceptance_rate_arithmetic() {
        let spec = poisson_spec();
        let mut sample =
            PosteriorSample::from_draws(vec![0.1, 0.2, 0.3], &spec).unwrap();
        sample.accept_count = 2500;
        sample.total_proposals = 5000;
        assert_eq!(acceptance_rate(&sample), 0.5);
        sample.accept_count = 5000;
        assert_eq!(acceptance_rate(&sample), 1.0);
        sample.accept_count = 0;
        assert_eq!(acceptance_rate(&sample), 0.0);
    }

    #[test]
    fn gaussian_surrogate_moments_match_target() {
        // Prior-only posterior sampled with a deliberately wider proposal:
        // retained draws must reproduce the target mean and variance.
        let spec = poisson_spec();
        let prior = PriorSpec {
            mean_beta: vec![1.5],
            var_beta: 0.49,
            mean_phi: vec![],
            var_phi: 1.0,
            mean_theta: vec![],
            var_theta: 1.0,
        };
        let series = series_of(vec![]);
        let mcmc = McmcConfig {
            iterations: 30_000,
            burn_in: 500,
            thin: 3,
            seed: 5,
            proposal_scale: 1.0,
        };
        let center = ParamVector::new(vec![0.9], vec![], vec![]);
        let cov = DMatrix::from_row_slice(1, 1, &[1.2]);
        let sample = mh_sample_with_proposal(&spec, &prior, &series, &mcmc, &center, &cov).unwrap();
        let q = sample.q_retained() as f64;
        let mean = sample.posterior_mean_flat()[0];
        let var = sample.posterior_variance_flat()[0];
        // Three-sigma Monte-Carlo bands, inflated for chain dependence.
        let se_mean = 2.0 * (0.49_f64 / q).sqrt();
        assert!((mean - 1.5).abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - 0.49).abs() < 0.49 * 0.15, "var {var}");
    }

    #[test]
    fn quantiles_are_ordered() {
        let spec = poisson_spec();
        let draws: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let sample = PosteriorSample::from_draws(draws, &spec).unwrap();
        assert_abs_diff_eq!(sample.column_quantile(0, 0.025), 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(sample.column_quantile(0, 0.975), 0.975, epsilon = 1e-12);
    }
}
