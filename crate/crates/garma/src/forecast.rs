//! h-step-ahead predictive densities, point forecasts and credible intervals
//! from the MCMC output.
//!
//! For each retained draw the predictor recursion is extended past the end
//! of the sample, substituting the draw's own conditional mean for future
//! observations. MA innovations at future lags are identically zero because
//! the substituted value equals the mean they are measured against. The
//! predictive density at a horizon is the draw-average of the family pmf,
//! enumerated upward from zero until almost all mass is covered.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PosteriorSample;
use crate::model::{
    self, design_matrix, CountSeries, Evaluator, Family, ModelSpec, PredictorForm,
};

/// Enumeration stops once the cumulative predictive mass reaches this.
const MASS_TARGET: f64 = 1.0 - 1e-8;
/// Hard cap on the enumerated support; reaching it is an error.
const Y_MAX: u64 = 1_000_000;
/// Draws processed per deterministic parallel chunk.
const DRAW_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMode {
    /// The cumulative-scan percentile interval.
    Percentile,
    /// Smallest set of support points by descending probability, reported
    /// as its [min, max] envelope.
    Hpd,
}

/// What to forecast: horizon, credibility via `delta` (level `1 - 2*delta`),
/// interval construction mode, and optional explicit future covariate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRequest {
    pub horizon: usize,
    pub delta: f64,
    pub interval_mode: IntervalMode,
    /// Row-major `horizon x n_covariates`; when absent, deterministic
    /// covariates (intercept, log-trend, seasonal) are extended automatically.
    pub future_x: Option<Vec<f64>>,
}

impl ForecastRequest {
    pub fn new(horizon: usize, delta: f64) -> Self {
        ForecastRequest {
            horizon,
            delta,
            interval_mode: IntervalMode::Percentile,
            future_x: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidSpec("forecast horizon must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidSpec(format!(
                "delta must lie in (0, 0.5), got {}",
                self.delta
            )));
        }
        if let Some(x) = &self.future_x {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(
                    "future covariates contain non-finite entries".into(),
                ));
            }
        }
        Ok(())
    }

    /// Future design rows: the provided matrix, or deterministic covariates
    /// continued past the end of the series.
    fn resolve_future_x(&self, spec: &ModelSpec, series: &CountSeries) -> Result<Vec<f64>> {
        if let Some(x) = &self.future_x {
            if x.len() != self.horizon * spec.n_beta() {
                return Err(Error::ShapeMismatch(format!(
                    "future_x has {} entries, expected {} x {}",
                    x.len(),
                    self.horizon,
                    spec.n_beta()
                )));
            }
            return Ok(x.clone());
        }
        design_matrix(
            &spec.covariates,
            self.horizon,
            series.origin() + series.len(),
            &std::collections::HashMap::new(),
        )
        .map_err(|_| {
            Error::InvalidSpec(
                "future_x must be supplied when the model uses external covariates".into(),
            )
        })
    }
}

/// Enumerated probability table over future count values for one horizon.
/// The support is contiguous from zero: `prob[y]` is the mass at `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDensity {
    pub h: usize,
    pub prob: Vec<f64>,
    /// Mass not covered by the enumerated support.
    pub tail_mass_bound: f64,
}

impl PredictiveDensity {
    /// Largest enumerated support value.
    pub fn support_max(&self) -> u64 {
        self.prob.len() as u64 - 1
    }
}

/// Per-draw conditional-mean forecasts.
#[derive(Debug, Clone)]
pub struct ForecastMeans {
    /// Row-major `included x horizon` matrix of per-draw means.
    pub per_draw: Vec<f64>,
    pub horizon: usize,
    /// Draws whose recursion stayed finite.
    pub included: usize,
    /// Draws excluded because their recursion diverged.
    pub excluded: usize,
    /// Column means: the point forecasts.
    pub point: Vec<f64>,
}

impl ForecastMeans {
    /// Per-draw means for one horizon (1-based `h`).
    pub fn column(&self, h: usize) -> Vec<f64> {
        (0..self.included)
            .map(|j| self.per_draw[j * self.horizon + (h - 1)])
            .collect()
    }
}

/// Point forecasts with credible bounds and the underlying densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub point: Vec<f64>,
    pub lower: Vec<u64>,
    pub upper: Vec<u64>,
    pub densities: Vec<PredictiveDensity>,
}

fn extend_one_draw(
    spec: &ModelSpec,
    series: &CountSeries,
    ylog: &[f64],
    state_mu: &[f64],
    beta: &[f64],
    phi: &[f64],
    theta: &[f64],
    future_x: &[f64],
    horizon: usize,
    out: &mut [f64],
) -> Result<()> {
    let n = series.len();
    let r = spec.start_index();
    let ncov = spec.n_beta();
    let mean_sub = spec.predictor_form == PredictorForm::MeanSubtracted;
    let family = spec.family;
    let m_upper = match family {
        Family::Binomial { size_m } => size_m as f64,
        _ => f64::INFINITY,
    };
    let fx = |h0: usize| &future_x[h0 * ncov..(h0 + 1) * ncov];
    let dot = |row: &[f64]| row.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();

    for h0 in 0..horizon {
        let mut eta = dot(fx(h0));
        for (j, &ph) in phi.iter().enumerate() {
            let s = n + h0 - (j + 1); // global time index of the lag
            let (logmean, xrow) = if s >= n {
                (out[s - n].ln(), fx(s - n))
            } else {
                (ylog[s], series.x_row(s))
            };
            eta += ph * if mean_sub { logmean - dot(xrow) } else { logmean };
        }
        for (j, &th) in theta.iter().enumerate() {
            let s = n + h0 - (j + 1);
            // Future innovations vanish; initialization-window ones are zero.
            if s < n && s >= r {
                eta += th * (ylog[s] - state_mu[s].ln());
            }
        }
        if !eta.is_finite() {
            return Err(Error::Divergence { t: n + h0 + 1 });
        }
        let mu = match family {
            Family::Poisson | Family::NegativeBinomial { .. } => eta.exp(),
            Family::Binomial { size_m } => {
                let m = size_m as f64;
                if eta >= 0.0 {
                    m / (1.0 + (-eta).exp())
                } else {
                    m * eta.exp() / (1.0 + eta.exp())
                }
            }
        };
        if !(mu > 0.0 && mu.is_finite() && mu < m_upper) {
            return Err(Error::Divergence { t: n + h0 + 1 });
        }
        out[h0] = mu;
    }
    Ok(())
}

/// Runs the per-draw forecast recursion for `h = 1..=horizon` and averages.
///
/// Column 1 of the per-draw matrix depends only on observed data; later
/// columns substitute the draw's previously computed means for unobserved
/// lags. Draws whose recursion diverges are dropped; more than 10% dropped
/// is an error.
pub fn forecast_means(
    spec: &ModelSpec,
    sample: &PosteriorSample,
    series: &CountSeries,
    request: &ForecastRequest,
) -> Result<ForecastMeans> {
    request.validate()?;
    let eval = Evaluator::new(spec, series)?;
    if sample.q_retained() == 0 {
        return Err(Error::InvalidSpec("posterior sample is empty".into()));
    }
    let future_x = request.resolve_future_x(spec, series)?;
    let horizon = request.horizon;
    let q = sample.q_retained();
    let chunk_ids: Vec<usize> = (0..q.div_ceil(DRAW_CHUNK)).collect();

    let partials: Vec<Result<(Vec<f64>, usize)>> = chunk_ids
        .par_iter()
        .map(|&c| {
            let lo = c * DRAW_CHUNK;
            let hi = (lo + DRAW_CHUNK).min(q);
            let mut rows = Vec::with_capacity((hi - lo) * horizon);
            let mut excluded = 0usize;
            let mut row = vec![0.0_f64; horizon];
            for j in lo..hi {
                let params = sample.param(j);
                let ok = match eval.predictor_pass(&params) {
                    Ok(state) => extend_one_draw(
                        spec,
                        series,
                        eval.ylog(),
                        &state.mu,
                        &params.beta,
                        &params.phi,
                        &params.theta,
                        &future_x,
                        horizon,
                        &mut row,
                    )
                    .is_ok(),
                    Err(_) => false,
                };
                if ok {
                    rows.extend_from_slice(&row);
                } else {
                    excluded += 1;
                }
            }
            Ok((rows, excluded))
        })
        .collect();

    let mut per_draw = Vec::with_capacity(q * horizon);
    let mut excluded = 0usize;
    for part in partials {
        let (rows, ex) = part?;
        per_draw.extend(rows);
        excluded += ex;
    }
    let included = q - excluded;
    if excluded * 10 > q {
        return Err(Error::TooManyFailures {
            what: "forecast draws",
            failed: excluded,
            total: q,
        });
    }
    if included == 0 {
        return Err(Error::TooManyFailures {
            what: "forecast draws",
            failed: excluded,
            total: q,
        });
    }

    let mut point = vec![0.0_f64; horizon];
    for j in 0..included {
        for (p, v) in point.iter_mut().zip(&per_draw[j * horizon..(j + 1) * horizon]) {
            *p += v;
        }
    }
    point.iter_mut().for_each(|p| *p /= included as f64);

    Ok(ForecastMeans {
        per_draw,
        horizon,
        included,
        excluded,
        point,
    })
}

/// Draw-averaged pmf over `y = 0, 1, 2, ...` for one horizon, stopping when
/// the cumulative mass reaches `1 - 1e-8` (binomial: the full support).
pub fn predictive_density_from_means(
    family: Family,
    mus: &[f64],
    h: usize,
) -> Result<PredictiveDensity> {
    if mus.is_empty() {
        return Err(Error::InvalidSpec("no per-draw means supplied".into()));
    }
    let q = mus.len() as f64;
    // Per-draw slope/offset of log f(y) = const(y) + b_j + y * a_j.
    let (a, b): (Vec<f64>, Vec<f64>) = match family {
        Family::Poisson => mus.iter().map(|&mu| (mu.ln(), -mu)).unzip(),
        Family::Binomial { size_m } => {
            let m = size_m as f64;
            mus.iter()
                .map(|&mu| ((mu / (m - mu)).ln(), m * ((m - mu) / m).ln()))
                .unzip()
        }
        Family::NegativeBinomial { dispersion_k } => {
            let k = dispersion_k;
            mus.iter()
                .map(|&mu| ((mu / (mu + k)).ln(), k * (k / (mu + k)).ln()))
                .unzip()
        }
    };

    let full_support = match family {
        Family::Binomial { size_m } => Some(size_m),
        _ => None,
    };
    let mut prob = Vec::new();
    let mut cumulative = 0.0_f64;
    let mut y = 0u64;
    loop {
        let c = model::dens_const(family, y);
        let yf = y as f64;
        let mut mass = 0.0;
        for (aj, bj) in a.iter().zip(&b) {
            mass += (c + bj + yf * aj).exp();
        }
        mass /= q;
        prob.push(mass);
        cumulative += mass;
        match full_support {
            Some(m) => {
                if y == m {
                    break;
                }
            }
            None => {
                if cumulative >= MASS_TARGET {
                    break;
                }
                if y >= Y_MAX {
                    return Err(Error::Forecast(format!(
                        "predictive mass target not reached by y = {Y_MAX} at horizon {h}"
                    )));
                }
            }
        }
        y += 1;
    }
    Ok(PredictiveDensity {
        h,
        prob,
        tail_mass_bound: (1.0 - cumulative).max(0.0),
    })
}

/// Predictive density at horizon `h`, running the mean recursion as needed.
pub fn predictive_density(
    spec: &ModelSpec,
    sample: &PosteriorSample,
    series: &CountSeries,
    h: usize,
) -> Result<PredictiveDensity> {
    let request = ForecastRequest::new(h, 0.05);
    let means = forecast_means(spec, sample, series, &request)?;
    predictive_density_from_means(spec.family, &means.column(h), h)
}

/// Credible bounds from an enumerated density.
///
/// Percentile mode walks the support upward accumulating mass: the lower
/// bound is the first y whose cumulative reaches `delta`, the upper the
/// first reaching `1 - delta`. HPD mode collects support points by
/// descending probability until their mass reaches `1 - 2*delta` and
/// reports the [min, max] of that set.
pub fn credible_interval(
    density: &PredictiveDensity,
    delta: f64,
    mode: IntervalMode,
) -> Result<(u64, u64)> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidSpec(format!(
            "delta must lie in (0, 0.5), got {delta}"
        )));
    }
    match mode {
        IntervalMode::Percentile => {
            let mut cumulative = 0.0;
            let mut lower: Option<u64> = None;
            let mut upper: Option<u64> = None;
            for (y, p) in density.prob.iter().enumerate() {
                cumulative += p;
                if lower.is_none() && cumulative >= delta {
                    lower = Some(y as u64);
                }
                if upper.is_none() && cumulative >= 1.0 - delta {
                    upper = Some(y as u64);
                    break;
                }
            }
            match (lower, upper) {
                (Some(lo), Some(hi)) => Ok((lo, hi)),
                _ => Err(Error::Forecast(
                    "enumerated mass insufficient for the requested interval".into(),
                )),
            }
        }
        IntervalMode::Hpd => {
            let mut order: Vec<usize> = (0..density.prob.len()).collect();
            order.sort_by(|&i, &j| {
                density.prob[j]
                    .partial_cmp(&density.prob[i])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(i.cmp(&j))
            });
            let target = 1.0 - 2.0 * delta;
            let mut mass = 0.0;
            let mut lo = u64::MAX;
            let mut hi = 0u64;
            for &idx in &order {
                mass += density.prob[idx];
                lo = lo.min(idx as u64);
                hi = hi.max(idx as u64);
                if mass >= target {
                    return Ok((lo, hi));
                }
            }
            Err(Error::Forecast(
                "enumerated mass insufficient for the requested HPD set".into(),
            ))
        }
    }
}

/// Point forecasts, credible bounds and densities for `h = 1..=horizon`.
pub fn forecast(
    spec: &ModelSpec,
    sample: &PosteriorSample,
    series: &CountSeries,
    request: &ForecastRequest,
) -> Result<ForecastResult> {
    let means = forecast_means(spec, sample, series, request)?;
    let mut densities = Vec::with_capacity(request.horizon);
    let mut lower = Vec::with_capacity(request.horizon);
    let mut upper = Vec::with_capacity(request.horizon);
    for h in 1..=request.horizon {
        let density = predictive_density_from_means(spec.family, &means.column(h), h)?;
        let (lo, hi) = credible_interval(&density, request.delta, request.interval_mode)?;
        lower.push(lo);
        upper.push(hi);
        densities.push(density);
    }
    Ok(ForecastResult {
        point: means.point,
        lower,
        upper,
        densities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_density, CovariateKind, ParamVector};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn series_of(y: Vec<u64>) -> CountSeries {
        CountSeries::from_counts(y, &[CovariateKind::Intercept], 1).unwrap()
    }

    fn degenerate_sample(spec: &ModelSpec, params: &ParamVector, q: usize) -> PosteriorSample {
        let flat = params.to_flat();
        let mut draws = Vec::with_capacity(q * flat.len());
        for _ in 0..q {
            draws.extend_from_slice(&flat);
        }
        PosteriorSample::from_draws(draws, spec).unwrap()
    }

    #[test]
    fn constant_model_forecasts_inverse_link() {
        let spec = ModelSpec::new(Family::Poisson, 0, 0);
        let params = ParamVector::new(vec![0.7], vec![], vec![]);
        let sample = degenerate_sample(&spec, &params, 5);
        let series = series_of(vec![2, 3, 1]);
        let means =
            forecast_means(&spec, &sample, &series, &ForecastRequest::new(3, 0.05)).unwrap();
        for h in 1..=3 {
            assert_relative_eq!(means.point[h - 1], 0.7_f64.exp(), epsilon = 1e-12);
        }
        assert_eq!(means.excluded, 0);
    }

    #[test]
    fn one_step_forecast_uses_only_observed_data() {
        // p = 1, q = 0: y-hat(t+1) averages inverse_link(beta + phi log y*_n).
        let spec = ModelSpec::new(Family::Poisson, 1, 0);
        let draws = vec![0.5, 0.4, 0.6, 0.3];
        let sample = PosteriorSample::from_draws(draws, &spec).unwrap();
        let series = series_of(vec![4, 2, 6]);
        let means =
            forecast_means(&spec, &sample, &series, &ForecastRequest::new(1, 0.05)).unwrap();
        let ylast = 6.0_f64.ln();
        let expected = ((0.5 + 0.4 * ylast).exp() + (0.6 + 0.3 * ylast).exp()) / 2.0;
        assert_relative_eq!(means.point[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn two_draw_recursion_hand_unrolled() {
        // GARMA(1,1), two draws, horizon 2, intercept-only design.
        let spec = ModelSpec::new(Family::Poisson, 1, 1);
        let draws = vec![0.3, 0.5, 0.2, 0.4, 0.3, 0.1];
        let sample = PosteriorSample::from_draws(draws.clone(), &spec).unwrap();
        let y = vec![3u64, 5, 2];
        let series = series_of(y.clone());
        let means =
            forecast_means(&spec, &sample, &series, &ForecastRequest::new(2, 0.05)).unwrap();

        let c = 0.1;
        let mut expected_h = [0.0f64; 2];
        for d in 0..2 {
            let (b0, ph, th) = (draws[d * 3], draws[d * 3 + 1], draws[d * 3 + 2]);
            // In-sample pass (r = 1): eta_0 = b0; innovations start at t = 1.
            let mut mu = vec![0.0f64; 3];
            let mut innov = vec![0.0f64; 3];
            mu[0] = b0.exp();
            let ylog = |t: usize| (y[t] as f64).max(c).ln();
            for t in 1..3 {
                let mut eta = b0 + ph * ylog(t - 1);
                if t - 1 >= 1 {
                    eta += th * innov[t - 1];
                }
                mu[t] = eta.exp();
                innov[t] = ylog(t) - mu[t].ln();
            }
            // h = 1 uses observed lag t = 2; h = 2 uses the h = 1 mean.
            let eta1 = b0 + ph * ylog(2) + th * innov[2];
            let mu1 = eta1.exp();
            let eta2 = b0 + ph * mu1.ln(); // future innovation is zero
            let mu2 = eta2.exp();
            expected_h[0] += mu1 / 2.0;
            expected_h[1] += mu2 / 2.0;
        }
        assert_relative_eq!(means.point[0], expected_h[0], epsilon = 1e-12);
        assert_relative_eq!(means.point[1], expected_h[1], epsilon = 1e-12);
    }

    #[test]
    fn degenerate_predictive_density_is_family_pmf() {
        let spec = ModelSpec::new(Family::Poisson, 0, 0);
        let mu = 2.5f64;
        let params = ParamVector::new(vec![mu.ln()], vec![], vec![]);
        let sample = degenerate_sample(&spec, &params, 3);
        let series = series_of(vec![2, 3]);
        let density = predictive_density(&spec, &sample, &series, 1).unwrap();
        for (y, p) in density.prob.iter().enumerate() {
            let expected = log_density(Family::Poisson, y as u64, mu).unwrap().exp();
            assert_relative_eq!(*p, expected, epsilon = 1e-12);
        }
        assert!(density.prob.iter().sum::<f64>() >= 1.0 - 1e-8);
        assert!(density.tail_mass_bound <= 1e-8);
    }

    #[test]
    fn two_draw_mixture_density() {
        let mus = [1.0, 3.0];
        let density =
            predictive_density_from_means(Family::Poisson, &mus, 1).unwrap();
        let expected0 = ((-1.0f64).exp() + (-3.0f64).exp()) / 2.0;
        assert_relative_eq!(density.prob[0], expected0, epsilon = 1e-14);
        assert_relative_eq!(density.prob[0], 0.2088, epsilon = 1e-4);
    }

    #[test]
    fn binomial_density_enumerates_full_support() {
        let density =
            predictive_density_from_means(Family::Binomial { size_m: 7 }, &[3.0, 4.0], 1).unwrap();
        assert_eq!(density.prob.len(), 8);
        assert_relative_eq!(density.prob.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn point_mass_hpd_interval() {
        let mut prob = vec![0.0; 8];
        prob[7] = 1.0;
        let density = PredictiveDensity {
            h: 1,
            prob,
            tail_mass_bound: 0.0,
        };
        assert_eq!(
            credible_interval(&density, 0.05, IntervalMode::Hpd).unwrap(),
            (7, 7)
        );
    }

    #[test]
    fn percentile_interval_matches_brute_force_scan() {
        // Poisson(3) pmf enumerated over 0..=50 and scanned directly.
        let mu = 3.0f64;
        let prob: Vec<f64> = (0..=50)
            .map(|y| log_density(Family::Poisson, y, mu).unwrap().exp())
            .collect();
        let density = PredictiveDensity {
            h: 1,
            prob: prob.clone(),
            tail_mass_bound: 0.0,
        };
        let delta = 0.05;
        let (lo, hi) = credible_interval(&density, delta, IntervalMode::Percentile).unwrap();

        let mut cum = 0.0;
        let mut oracle_lo = None;
        let mut oracle_hi = None;
        for (y, p) in prob.iter().enumerate() {
            cum += p;
            if oracle_lo.is_none() && cum >= delta {
                oracle_lo = Some(y as u64);
            }
            if oracle_hi.is_none() && cum >= 1.0 - delta {
                oracle_hi = Some(y as u64);
            }
        }
        assert_eq!((lo, hi), (oracle_lo.unwrap(), oracle_hi.unwrap()));
        // Known quantiles of Poisson(3) at 5% / 95%.
        assert_eq!((lo, hi), (1, 6));
    }

    #[test]
    fn symmetric_two_point_percentiles() {
        let mut prob = vec![0.0; 10];
        prob[5] = 0.5;
        prob[9] = 0.5;
        let density = PredictiveDensity {
            h: 1,
            prob,
            tail_mass_bound: 0.0,
        };
        assert_eq!(
            credible_interval(&density, 0.25, IntervalMode::Percentile).unwrap(),
            (5, 9)
        );
    }

    #[test]
    fn interval_modes_both_carry_requested_mass() {
        let mus = [2.0, 4.5, 3.0];
        let density = predictive_density_from_means(Family::Poisson, &mus, 1).unwrap();
        for delta in [0.05, 0.1, 0.25] {
            for mode in [IntervalMode::Percentile, IntervalMode::Hpd] {
                let (lo, hi) = credible_interval(&density, delta, mode).unwrap();
                let mass: f64 = density.prob[lo as usize..=hi as usize].iter().sum();
                assert!(
                    mass >= 1.0 - 2.0 * delta - 1e-12,
                    "mode {mode:?} delta {delta}: mass {mass}"
                );
            }
        }
    }

    #[test]
    fn full_forecast_composition() {
        let spec = ModelSpec::new(Family::Poisson, 0, 0);
        let params = ParamVector::new(vec![2.0f64.ln()], vec![], vec![]);
        let sample = degenerate_sample(&spec, &params, 4);
        let series = series_of(vec![1, 2, 3]);
        let request = ForecastRequest::new(3, 0.05);
        let result = forecast(&spec, &sample, &series, &request).unwrap();
        for h in 0..3 {
            assert_relative_eq!(result.point[h], 2.0, epsilon = 1e-12);
            assert_eq!(result.lower[h], result.lower[0]);
            assert_eq!(result.upper[h], result.upper[0]);
        }
        // Poisson(2): 5% quantile 0, 95% quantile 5.
        assert_eq!(result.lower[0], 0);
        assert_eq!(result.upper[0], 5);
        assert_abs_diff_eq!(
            result.densities[0].prob.iter().sum::<f64>() + result.densities[0].tail_mass_bound,
            1.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn intervals_widen_as_delta_shrinks() {
        let mus = [3.0, 5.0, 4.0];
        let density = predictive_density_from_means(Family::Poisson, &mus, 1).unwrap();
        let mut widths = Vec::new();
        for delta in [0.25, 0.1, 0.05, 0.01] {
            let (lo, hi) = credible_interval(&density, delta, IntervalMode::Percentile).unwrap();
            widths.push(hi as i64 - lo as i64);
        }
        for w in widths.windows(2) {
            assert!(w[1] >= w[0], "interval narrowed: {widths:?}");
        }
    }

    #[test]
    fn divergent_draws_are_excluded_with_count() {
        let spec = ModelSpec::new(Family::Poisson, 1, 0);
        // One sane draw and nineteen with an explosive AR coefficient.
        let mut draws = vec![0.4, 0.3];
        for _ in 0..19 {
            draws.extend([0.4, 200.0]);
        }
        let sample = PosteriorSample::from_draws(draws, &spec).unwrap();
        let series = series_of(vec![800, 900, 850]);
        let err = forecast_means(&spec, &sample, &series, &ForecastRequest::new(2, 0.05));
        match err {
            Err(Error::TooManyFailures { failed, total, .. }) => {
                assert_eq!(total, 20);
                assert!(failed >= 19);
            }
            other => panic!("expected failure-rate error, got {other:?}"),
        }
    }
}
