//! Convergence checking, residual analysis, autocorrelation, normality
//! testing and forecast accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::PosteriorSample;
use crate::model::{CountSeries, Evaluator, ModelSpec, ParamVector};

/// Geweke convergence diagnostic per parameter: standardized difference of
/// early- and late-segment chain means. |z| <= 2 indicates no detected
/// non-convergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub z: Vec<f64>,
    pub frac_a: f64,
    pub frac_b: f64,
}

/// Spectral density at zero via Newey-West weighting with bandwidth
/// floor(sqrt(segment length)).
fn spectral_zero(segment: &[f64]) -> Result<f64> {
    let n = segment.len();
    let mean = segment.iter().sum::<f64>() / n as f64;
    let autocov = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|t| (segment[t] - mean) * (segment[t + lag] - mean))
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    if gamma0 <= 0.0 || !gamma0.is_finite() {
        return Err(Error::Degenerate(
            "chain segment has zero variance".into(),
        ));
    }
    let bandwidth = (n as f64).sqrt().floor() as usize;
    let mut s = gamma0;
    for lag in 1..=bandwidth.min(n - 1) {
        let w = 1.0 - lag as f64 / (bandwidth + 1) as f64;
        s += 2.0 * w * autocov(lag);
    }
    if s <= 0.0 {
        return Err(Error::Degenerate(
            "spectral variance estimate is not positive".into(),
        ));
    }
    Ok(s)
}

/// z statistic comparing the mean of the first `frac_a` of the chain with
/// the mean of the last `frac_b`, using spectral variance estimates.
pub fn geweke_z(chain: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    if chain.len() < 100 {
        return Err(Error::InvalidSpec(format!(
            "Geweke diagnostic needs a chain of length >= 100, got {}",
            chain.len()
        )));
    }
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(Error::InvalidSpec(format!(
            "segment fractions must be positive with frac_a + frac_b <= 1, got {frac_a}, {frac_b}"
        )));
    }
    let n = chain.len();
    let na = ((n as f64) * frac_a).floor() as usize;
    let nb = ((n as f64) * frac_b).floor() as usize;
    let seg_a = &chain[..na];
    let seg_b = &chain[n - nb..];
    let mean_a = seg_a.iter().sum::<f64>() / na as f64;
    let mean_b = seg_b.iter().sum::<f64>() / nb as f64;
    let sa = spectral_zero(seg_a)?;
    let sb = spectral_zero(seg_b)?;
    Ok((mean_a - mean_b) / (sa / na as f64 + sb / nb as f64).sqrt())
}

/// Geweke z for every parameter column of a posterior sample, with the
/// default 10% / 50% segments.
pub fn geweke_report(sample: &PosteriorSample) -> Result<GewekeReport> {
    let (frac_a, frac_b) = (0.10, 0.50);
    let mut z = Vec::with_capacity(sample.dim());
    for k in 0..sample.dim() {
        z.push(geweke_z(&sample.column(k), frac_a, frac_b)?);
    }
    Ok(GewekeReport { z, frac_a, frac_b })
}

/// Randomized quantile residuals with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub acf: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    /// Residuals whose uniform draw had to be clamped away from 0 or 1.
    pub clamped: usize,
}

/// Randomized quantile residuals `r_t = Phi^{-1}(u_t)` with
/// `u_t ~ Uniform(F(y_t - 1), F(y_t))` under the fitted conditional pmf.
/// Approximately standard normal when the model is correctly specified;
/// deterministic given the seed.
pub fn quantile_residuals(
    spec: &ModelSpec,
    params: &ParamVector,
    series: &CountSeries,
    seed: u64,
) -> Result<ResidualReport> {
    let eval = Evaluator::new(spec, series)?;
    let state = eval.predictor_pass(params)?;
    let r = spec.start_index();
    if series.len() <= r {
        return Err(Error::InvalidSpec(
            "no likelihood window to compute residuals on".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut residuals = Vec::with_capacity(series.len() - r);
    let mut clamped = 0usize;
    for t in r..series.len() {
        let y = series.counts()[t];
        let mu = state.mu[t];
        // F(y-1) and F(y) from the same pmf the likelihood uses.
        let mut below = 0.0;
        for v in 0..y {
            below += crate::model::log_density(spec.family, v, mu)?.exp();
        }
        let at = crate::model::log_density(spec.family, y, mu)?.exp();
        let u_raw: f64 = rng.random();
        let mut u = below + u_raw * at;
        if u <= 0.0 || u >= 1.0 {
            u = u.clamp(1e-12, 1.0 - 1e-12);
            clamped += 1;
        }
        residuals.push(normal.inverse_cdf(u));
    }

    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let sd = (residuals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (n - 1.0).max(1.0))
    .sqrt();
    let max_lag = 40.min(residuals.len() / 4).max(1);
    let acf = acf(&residuals, max_lag)?;
    let (ks_statistic, ks_pvalue) = ks_normality(&residuals, mean, sd)?;
    Ok(ResidualReport {
        residuals,
        mean,
        sd,
        acf,
        ks_statistic,
        ks_pvalue,
        clamped,
    })
}

/// Residuals at the posterior-mean parameters of an MCMC sample.
pub fn quantile_residuals_from_sample(
    spec: &ModelSpec,
    sample: &PosteriorSample,
    series: &CountSeries,
    seed: u64,
) -> Result<ResidualReport> {
    quantile_residuals(spec, &sample.posterior_mean(), series, seed)
}

/// Asymptotic Kolmogorov distribution survival function,
/// `P(sqrt(n) D > lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`,
/// truncated at 100 terms.
fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut p = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        p += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test of `sample` against
/// Normal(mean, sd): statistic `D = sup |F_emp - Phi|` and its asymptotic
/// p-value.
pub fn ks_normality(sample: &[f64], mean: f64, sd: f64) -> Result<(f64, f64)> {
    if sample.len() < 8 {
        return Err(Error::InvalidSpec(format!(
            "KS test needs at least 8 observations, got {}",
            sample.len()
        )));
    }
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::Degenerate(format!(
            "KS reference scale must be positive, got {sd}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, x) in sorted.iter().enumerate() {
        let cdf = normal.cdf((x - mean) / sd);
        let upper = (i as f64 + 1.0) / n - cdf;
        let lower = cdf - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    Ok((d, kolmogorov_pvalue(n.sqrt() * d)))
}

/// Biased-normalized autocorrelation up to `max_lag`; `acf[0] = 1`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::InvalidSpec(format!(
            "series of length {} is too short for max_lag {max_lag}",
            series.len()
        )));
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let num: f64 = (0..n - lag)
            .map(|t| (series[t] - mean) * (series[t + lag] - mean))
            .sum();
        out.push(num / denom);
    }
    Ok(out)
}

/// Mean absolute percentage error `100 * mean(|y - yhat| / |y|)`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::ShapeMismatch(format!(
            "actual and predicted lengths differ: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.iter().any(|&v| v == 0.0) {
        return Err(Error::Domain {
            family: "mape",
            message: "actual values must be nonzero".into(),
        });
    }
    Ok(100.0
        * actual
            .iter()
            .zip(predicted)
            .map(|(y, p)| ((y - p) / y).abs())
            .sum::<f64>()
        / actual.len() as f64)
}
