//! Families, link functions, the linear-predictor recursion and the partial
//! log-likelihood for GARMA(p,q) count models.
//!
//! The conditional mean follows an ARMA-style recursion on the log scale:
//! AR terms enter as `phi_j * log(y*_{t-j})` and MA terms as
//! `theta_j * (log(y*_{t-j}) - log(mu_{t-j}))`, where `y* = max(y, c)` keeps
//! the logarithm defined at zero counts. The mean-subtracted predictor form
//! replaces the AR term with `phi_j * (log(y*_{t-j}) - x'_{t-j} beta)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Conditional distribution of the counts.
///
/// The binomial trial count `m` and the negative binomial dispersion `k`
/// are treated as known constants, not estimated parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    Poisson,
    Binomial { size_m: u64 },
    NegativeBinomial { dispersion_k: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Poisson => "Poisson",
            Family::Binomial { .. } => "Binomial",
            Family::NegativeBinomial { .. } => "NegativeBinomial",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::Poisson => Ok(()),
            Family::Binomial { size_m } => {
                if size_m >= 1 {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec("binomial size_m must be >= 1".into()))
                }
            }
            Family::NegativeBinomial { dispersion_k } => {
                if dispersion_k > 0.0 && dispersion_k.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "negative binomial dispersion_k must be a positive real, got {dispersion_k}"
                    )))
                }
            }
        }
    }

    /// Upper bound of the valid mean range (`m` for binomial, +inf otherwise).
    fn mean_upper(&self) -> f64 {
        match *self {
            Family::Binomial { size_m } => size_m as f64,
            _ => f64::INFINITY,
        }
    }

    fn check_mean(&self, mu: f64) -> Result<()> {
        let hi = self.mean_upper();
        if mu.is_finite() && mu > 0.0 && mu < hi {
            Ok(())
        } else {
            Err(Error::Domain {
                family: self.name(),
                message: format!("mean {mu} outside valid range (0, {hi})"),
            })
        }
    }

    fn check_count(&self, y: u64) -> Result<()> {
        if let Family::Binomial { size_m } = *self {
            if y > size_m {
                return Err(Error::Domain {
                    family: self.name(),
                    message: format!("count {y} exceeds binomial size m = {size_m}"),
                });
            }
        }
        Ok(())
    }
}

/// Link function `eta = g(mu)`: log for Poisson and negative binomial,
/// logit of `mu/m` for binomial.
pub fn link(family: Family, mu: f64) -> Result<f64> {
    family.check_mean(mu)?;
    match family {
        Family::Poisson | Family::NegativeBinomial { .. } => Ok(mu.ln()),
        Family::Binomial { size_m } => Ok((mu / (size_m as f64 - mu)).ln()),
    }
}

/// Inverse link `mu = g^{-1}(eta)`; saturates smoothly for large `|eta|`
/// in the binomial case instead of overflowing.
pub fn inverse_link(family: Family, eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Domain {
            family: family.name(),
            message: format!("non-finite linear predictor {eta}"),
        });
    }
    Ok(inverse_link_unchecked(family, eta))
}

#[inline]
fn inverse_link_unchecked(family: Family, eta: f64) -> f64 {
    match family {
        Family::Poisson | Family::NegativeBinomial { .. } => eta.exp(),
        Family::Binomial { size_m } => {
            let m = size_m as f64;
            if eta >= 0.0 {
                m / (1.0 + (-eta).exp())
            } else {
                let e = eta.exp();
                m * e / (1.0 + e)
            }
        }
    }
}

/// Element-wise `y* = max(y, c)` with `0 < c < 1`, so `log(y*)` exists at
/// zero counts.
pub fn clamp_counts(y: &[u64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "clamp threshold c must lie in (0,1), got {c}"
        )));
    }
    Ok(y.iter().map(|&v| (v as f64).max(c)).collect())
}

/// Log conditional density `log f(y | mu)` of the given family.
///
/// Uses log-gamma throughout; factorials are never materialized.
pub fn log_density(family: Family, y: u64, mu: f64) -> Result<f64> {
    family.check_count(y)?;
    family.check_mean(mu)?;
    Ok(log_density_with_const(family, y, mu, dens_const(family, y)))
}

/// Per-observation additive constant of the log density (depends on `y` and
/// the family constants only, not on `mu`).
#[inline]
pub(crate) fn dens_const(family: Family, y: u64) -> f64 {
    let yf = y as f64;
    match family {
        Family::Poisson => -ln_gamma(yf + 1.0),
        Family::Binomial { size_m } => {
            let m = size_m as f64;
            ln_gamma(m + 1.0) - ln_gamma(yf + 1.0) - ln_gamma(m - yf + 1.0)
        }
        Family::NegativeBinomial { dispersion_k } => {
            ln_gamma(dispersion_k + yf) - ln_gamma(yf + 1.0) - ln_gamma(dispersion_k)
        }
    }
}

#[inline]
pub(crate) fn log_density_with_const(family: Family, y: u64, mu: f64, c: f64) -> f64 {
    let yf = y as f64;
    match family {
        Family::Poisson => yf * mu.ln() - mu + c,
        Family::Binomial { size_m } => {
            let m = size_m as f64;
            yf * mu.ln() + (m - yf) * (m - mu).ln() - m * m.ln() + c
        }
        Family::NegativeBinomial { dispersion_k } => {
            let k = dispersion_k;
            k * k.ln() - (k + yf) * (mu + k).ln() + yf * mu.ln() + c
        }
    }
}

/// Which lagged-term form the recursion uses for the AR block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorForm {
    /// AR terms are `phi_j * log(y*_{t-j})`, with no regression subtraction.
    PaperLiteral,
    /// AR terms are `phi_j * (log(y*_{t-j}) - x'_{t-j} beta)`.
    MeanSubtracted,
}

/// Deterministic regressor columns of the design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateKind {
    Intercept,
    /// `log(t)` with `t` the 1-based time index.
    LogTrend,
    /// `cos(2 pi t / period)`.
    SeasonalCos { period: u32 },
    /// `sin(2 pi t / period)`.
    SeasonalSin { period: u32 },
    /// A user-supplied column, matched by name.
    External { name: String },
}

impl CovariateKind {
    fn validate(&self) -> Result<()> {
        match self {
            CovariateKind::SeasonalCos { period } | CovariateKind::SeasonalSin { period } => {
                if *period >= 2 {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "seasonal period must be >= 2, got {period}"
                    )))
                }
            }
            _ => Ok(()),
        }
    }

    /// Short identifier used in parameter names and CSV headers.
    fn label(&self, seasonal_index: &mut usize) -> String {
        match self {
            CovariateKind::Intercept => "beta0".into(),
            CovariateKind::LogTrend => "beta_exp".into(),
            CovariateKind::SeasonalCos { .. } | CovariateKind::SeasonalSin { .. } => {
                *seasonal_index += 1;
                format!("beta_s{seasonal_index}")
            }
            CovariateKind::External { name } => format!("beta_{name}"),
        }
    }
}

/// Full specification of a GARMA(p,q) model: family, orders, clamp threshold,
/// regression design and predictor form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub p: usize,
    pub q: usize,
    pub clamp_c: f64,
    pub covariates: Vec<CovariateKind>,
    pub predictor_form: PredictorForm,
}

impl ModelSpec {
    /// Intercept-only model with the default clamp `c = 0.1` and the
    /// paper-literal predictor form.
    pub fn new(family: Family, p: usize, q: usize) -> Self {
        ModelSpec {
            family,
            p,
            q,
            clamp_c: 0.1,
            covariates: vec![CovariateKind::Intercept],
            predictor_form: PredictorForm::PaperLiteral,
        }
    }

    pub fn with_covariates(mut self, covariates: Vec<CovariateKind>) -> Self {
        self.covariates = covariates;
        self
    }

    pub fn with_clamp(mut self, c: f64) -> Self {
        self.clamp_c = c;
        self
    }

    pub fn with_form(mut self, form: PredictorForm) -> Self {
        self.predictor_form = form;
        self
    }

    /// Same family, covariates and options with a different (p,q) order.
    pub fn with_order(&self, p: usize, q: usize) -> Self {
        let mut s = self.clone();
        s.p = p;
        s.q = q;
        s
    }

    /// Number of regression coefficients.
    pub fn n_beta(&self) -> usize {
        self.covariates.len()
    }

    /// Total parameter count `len(beta) + p + q`.
    pub fn dim(&self) -> usize {
        self.n_beta() + self.p + self.q
    }

    /// `r = max(p, q)`: the likelihood window starts at `t = r + 1`.
    pub fn start_index(&self) -> usize {
        self.p.max(self.q)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.dim() < 1 {
            return Err(Error::InvalidSpec(
                "model needs at least one parameter (p + q + regressors >= 1)".into(),
            ));
        }
        if !(self.clamp_c > 0.0 && self.clamp_c < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "clamp_c must lie in (0,1), got {}",
                self.clamp_c
            )));
        }
        for cov in &self.covariates {
            cov.validate()?;
        }
        Ok(())
    }

    /// Parameter names in flat order (beta block, then phi, then theta).
    pub fn param_names(&self) -> Vec<String> {
        let mut seasonal = 0usize;
        let mut names: Vec<String> = self
            .covariates
            .iter()
            .map(|c| c.label(&mut seasonal))
            .collect();
        names.extend((1..=self.p).map(|j| format!("phi{j}")));
        names.extend((1..=self.q).map(|j| format!("theta{j}")));
        names
    }
}

/// Regression, AR and MA coefficients as three blocks; the flat order used
/// everywhere (draw matrices, optimizers) is `beta | phi | theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ParamVector {
    pub fn new(beta: Vec<f64>, phi: Vec<f64>, theta: Vec<f64>) -> Self {
        ParamVector { beta, phi, theta }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        ParamVector {
            beta: vec![0.0; spec.n_beta()],
            phi: vec![0.0; spec.p],
            theta: vec![0.0; spec.q],
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + self.phi.len() + self.theta.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.theta);
        v
    }

    pub fn from_flat(flat: &[f64], spec: &ModelSpec) -> Result<Self> {
        if flat.len() != spec.dim() {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector has length {}, model needs {}",
                flat.len(),
                spec.dim()
            )));
        }
        let (beta, rest) = flat.split_at(spec.n_beta());
        let (phi, theta) = rest.split_at(spec.p);
        Ok(ParamVector {
            beta: beta.to_vec(),
            phi: phi.to_vec(),
            theta: theta.to_vec(),
        })
    }

    pub fn conforms(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.n_beta()
            || self.phi.len() != spec.p
            || self.theta.len() != spec.q
        {
            return Err(Error::ShapeMismatch(format!(
                "parameter blocks ({}, {}, {}) do not match model ({}, {}, {})",
                self.beta.len(),
                self.phi.len(),
                self.theta.len(),
                spec.n_beta(),
                spec.p,
                spec.q
            )));
        }
        if self
            .beta
            .iter()
            .chain(&self.phi)
            .chain(&self.theta)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidSpec(
                "parameter vector contains non-finite entries".into(),
            ));
        }
        Ok(())
    }
}

/// Observed counts with their covariate design matrix.
///
/// `origin` is the 1-based time index of the first observation, so that
/// deterministic covariates (`log t`, seasonal phase) line up with the clock
/// the series was generated or recorded on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    y: Vec<u64>,
    x: Vec<f64>,
    n_covariates: usize,
    origin: usize,
}

impl CountSeries {
    /// `x` is row-major with `y.len()` rows of `n_covariates` entries.
    pub fn new(y: Vec<u64>, x: Vec<f64>, n_covariates: usize, origin: usize) -> Result<Self> {
        if n_covariates == 0 && !x.is_empty() {
            return Err(Error::ShapeMismatch(
                "x must be empty when there are no covariates".into(),
            ));
        }
        if n_covariates > 0 && x.len() != y.len() * n_covariates {
            return Err(Error::ShapeMismatch(format!(
                "design matrix has {} entries, expected {} x {}",
                x.len(),
                y.len(),
                n_covariates
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(
                "design matrix contains non-finite entries".into(),
            ));
        }
        if origin == 0 {
            return Err(Error::InvalidSpec("origin is a 1-based time index".into()));
        }
        Ok(CountSeries {
            y,
            x,
            n_covariates,
            origin,
        })
    }

    /// Builds the design matrix from `covariates` and wraps the counts.
    pub fn from_counts(y: Vec<u64>, covariates: &[CovariateKind], origin: usize) -> Result<Self> {
        let x = design_matrix(covariates, y.len(), origin, &HashMap::new())?;
        CountSeries::new(y, x, covariates.len(), origin)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.y
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn x_row(&self, t: usize) -> &[f64] {
        &self.x[t * self.n_covariates..(t + 1) * self.n_covariates]
    }

    /// Checks count-range compatibility with a family (binomial `y <= m`).
    pub fn validate_for(&self, spec: &ModelSpec) -> Result<()> {
        if self.n_covariates != spec.n_beta() {
            return Err(Error::ShapeMismatch(format!(
                "series has {} covariate columns, model declares {}",
                self.n_covariates,
                spec.n_beta()
            )));
        }
        for &v in &self.y {
            spec.family.check_count(v)?;
        }
        Ok(())
    }
}

/// Builds a row-major design matrix for `n` observations starting at time
/// index `origin` (1-based). External columns are looked up by name and must
/// have length `n`.
pub fn design_matrix(
    covariates: &[CovariateKind],
    n: usize,
    origin: usize,
    externals: &HashMap<String, Vec<f64>>,
) -> Result<Vec<f64>> {
    use std::f64::consts::TAU;
    let mut x = Vec::with_capacity(n * covariates.len());
    for i in 0..n {
        let t = (origin + i) as f64;
        for cov in covariates {
            cov.validate()?;
            let v = match cov {
                CovariateKind::Intercept => 1.0,
                CovariateKind::LogTrend => t.ln(),
                CovariateKind::SeasonalCos { period } => (TAU * t / *period as f64).cos(),
                CovariateKind::SeasonalSin { period } => (TAU * t / *period as f64).sin(),
                CovariateKind::External { name } => {
                    let col = externals.get(name).ok_or_else(|| {
                        Error::InvalidSpec(format!("external covariate '{name}' not provided"))
                    })?;
                    if col.len() != n {
                        return Err(Error::ShapeMismatch(format!(
                            "external covariate '{name}' has length {}, expected {n}",
                            col.len()
                        )));
                    }
                    col[i]
                }
            };
            x.push(v);
        }
    }
    Ok(x)
}

/// Linear predictors and conditional means from one recursion pass.
///
/// Entries at `t < start_index` are initialization values
/// (`eta = x' beta`, `mu = g^{-1}(eta)`); the likelihood window is
/// `t >= start_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub start_index: usize,
}

/// Prepared evaluator binding a model to a series.
///
/// Caches `log(max(y, c))` and the mu-independent density constants so that
/// repeated likelihood evaluations (optimizer, MCMC, per-draw criteria) cost
/// one pass of arithmetic per call.
pub struct Evaluator<'a> {
    spec: &'a ModelSpec,
    series: &'a CountSeries,
    ylog: Vec<f64>,
    dens_const: Vec<f64>,
    r: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(spec: &'a ModelSpec, series: &'a CountSeries) -> Result<Self> {
        spec.validate()?;
        series.validate_for(spec)?;
        let r = spec.start_index();
        if series.len() < r {
            return Err(Error::InvalidSpec(format!(
                "series length {} is shorter than max(p,q) = {r}",
                series.len()
            )));
        }
        let ylog = clamp_counts(series.counts(), spec.clamp_c)?
            .iter()
            .map(|v| v.ln())
            .collect();
        let dens_const = series
            .counts()
            .iter()
            .map(|&y| dens_const(spec.family, y))
            .collect();
        Ok(Evaluator {
            spec,
            series,
            ylog,
            dens_const,
            r,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn series(&self) -> &CountSeries {
        self.series
    }

    /// `log(max(y_t, c))` for every observation.
    pub fn ylog(&self) -> &[f64] {
        &self.ylog
    }

    /// Core recursion. Walks t = 0..n, computing `eta_t`/`mu_t`; for
    /// `t >= r` evaluates the per-observation log density and hands
    /// `(t, mu_t, log f_t)` to `visit`. Returns the summed log density.
    fn run<F>(&self, beta: &[f64], phi: &[f64], theta: &[f64], mut visit: F) -> Result<f64>
    where
        F: FnMut(usize, f64, f64, f64),
    {
        let n = self.series.len();
        let r = self.r;
        let family = self.spec.family;
        let mean_sub = self.spec.predictor_form == PredictorForm::MeanSubtracted;
        let q = theta.len();

        // Ring buffer of the last q MA innovations log(y*_s) - log(mu_s);
        // innovations for s < r are zero by the initialization convention.
        let mut innov = vec![0.0_f64; q.max(1)];
        let mut total = 0.0;

        let xb = |t: usize| -> f64 {
            self.series
                .x_row(t)
                .iter()
                .zip(beta)
                .map(|(x, b)| x * b)
                .sum()
        };

        for t in 0..n {
            let eta = if t < r {
                xb(t)
            } else {
                let mut e = xb(t);
                for (j, &ph) in phi.iter().enumerate() {
                    let s = t - (j + 1);
                    let ar = if mean_sub {
                        self.ylog[s] - xb(s)
                    } else {
                        self.ylog[s]
                    };
                    e += ph * ar;
                }
                for (j, &th) in theta.iter().enumerate() {
                    let s = t - (j + 1);
                    if s >= r {
                        e += th * innov[s % q];
                    }
                }
                e
            };
            if !eta.is_finite() {
                return Err(Error::Divergence { t: t + 1 });
            }
            let mu = inverse_link_unchecked(family, eta);
            if !(mu > 0.0 && mu.is_finite() && mu < family.mean_upper()) {
                return Err(Error::Divergence { t: t + 1 });
            }
            if q > 0 && t >= r {
                innov[t % q] = self.ylog[t] - mu.ln();
            }
            if t >= r {
                let logf =
                    log_density_with_const(family, self.series.counts()[t], mu, self.dens_const[t]);
                if !logf.is_finite() {
                    return Err(Error::Divergence { t: t + 1 });
                }
                total += logf;
                visit(t, eta, mu, logf);
            } else {
                visit(t, eta, mu, f64::NAN);
            }
        }
        Ok(total)
    }

    /// Sum of `log f(y_t | mu_t)` over the likelihood window `t > r`.
    pub fn log_partial_likelihood(&self, params: &ParamVector) -> Result<f64> {
        params.conforms(self.spec)?;
        self.run(&params.beta, &params.phi, &params.theta, |_, _, _, _| {})
    }

    /// Same as [`Evaluator::log_partial_likelihood`] on a flat
    /// `beta | phi | theta` slice, skipping block reassembly.
    pub(crate) fn log_partial_likelihood_flat(&self, flat: &[f64]) -> Result<f64> {
        let (beta, rest) = flat.split_at(self.spec.n_beta());
        let (phi, theta) = rest.split_at(self.spec.p);
        self.run(beta, phi, theta, |_, _, _, _| {})
    }

    /// Full pass storing `eta_t` and `mu_t` for every t.
    pub fn predictor_pass(&self, params: &ParamVector) -> Result<PredictorState> {
        params.conforms(self.spec)?;
        let n = self.series.len();
        let mut eta = vec![0.0; n];
        let mut mu = vec![0.0; n];
        self.run(&params.beta, &params.phi, &params.theta, |t, e, m, _| {
            eta[t] = e;
            mu[t] = m;
        })?;
        Ok(PredictorState {
            eta,
            mu,
            start_index: self.r,
        })
    }

    /// Per-observation log densities for `t >= r`, in series order.
    pub fn per_obs_log_density(&self, params: &ParamVector) -> Result<Vec<f64>> {
        params.conforms(self.spec)?;
        let mut out = Vec::with_capacity(self.series.len() - self.r);
        self.run(&params.beta, &params.phi, &params.theta, |t, _, _, lf| {
            if t >= self.r {
                out.push(lf);
            }
        })?;
        Ok(out)
    }
}

/// One-shot recursion pass; see [`Evaluator::predictor_pass`] for the cached
/// variant used in loops.
pub fn linear_predictor_pass(
    spec: &ModelSpec,
    params: &ParamVector,
    series: &CountSeries,
) -> Result<PredictorState> {
    Evaluator::new(spec, series)?.predictor_pass(params)
}

/// One-shot partial log-likelihood `sum_{t=r+1}^n log f(y_t | mu_t)`.
pub fn log_partial_likelihood(
    spec: &ModelSpec,
    params: &ParamVector,
    series: &CountSeries,
) -> Result<f64> {
    Evaluator::new(spec, series)?.log_partial_likelihood(params)
}
