//! Bayesian model-selection criteria computed from posterior draws:
//! expected BIC, DIC in the Spiegelhalter form, and the harmonic-mean
//! conditional predictive ordinate with its log sum (LPML).
//!
//! Lower is better for EBIC and DIC; higher is better for LPML.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PosteriorSample;
use crate::model::{CountSeries, Evaluator, ModelSpec, ParamVector};

/// Draws are processed in fixed-size chunks whose partial results are merged
/// in chunk order, so parallel and sequential runs produce identical floats.
const DRAW_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub ebic: f64,
    pub dic: f64,
    pub lpml: f64,
    /// Likelihood window length `n - max(p,q)`.
    pub n_eff: usize,
    /// Parameter count.
    pub dim: usize,
}

/// `-2 * log_partial_likelihood`.
pub fn deviance(spec: &ModelSpec, params: &ParamVector, series: &CountSeries) -> Result<f64> {
    Ok(-2.0 * crate::model::log_partial_likelihood(spec, params, series)?)
}

/// Per-t running log-sum-exp accumulator of `-log f(y_t | theta_j)`.
struct LseAcc {
    max: Vec<f64>,
    sum: Vec<f64>,
}

impl LseAcc {
    fn new(n: usize) -> Self {
        LseAcc {
            max: vec![f64::NEG_INFINITY; n],
            sum: vec![0.0; n],
        }
    }

    fn push(&mut self, t: usize, v: f64) {
        if v <= self.max[t] {
            self.sum[t] += (v - self.max[t]).exp();
        } else {
            self.sum[t] = self.sum[t] * (self.max[t] - v).exp() + 1.0;
            self.max[t] = v;
        }
    }

    fn merge(&mut self, other: &LseAcc) {
        for t in 0..self.max.len() {
            let (m1, s1) = (self.max[t], self.sum[t]);
            let (m2, s2) = (other.max[t], other.sum[t]);
            if m2 == f64::NEG_INFINITY {
                continue;
            }
            if m1 >= m2 {
                self.sum[t] = s1 + s2 * (m2 - m1).exp();
            } else {
                self.max[t] = m2;
                self.sum[t] = s2 + s1 * (m1 - m2).exp();
            }
        }
    }

    fn value(&self, t: usize) -> f64 {
        self.max[t] + self.sum[t].ln()
    }
}

struct DrawStats {
    /// Deviance of every retained draw, in draw order.
    dev: Vec<f64>,
    /// log-sum-exp over draws of the negated per-observation log densities.
    neg_logf_lse: LseAcc,
}

/// Per-draw deviances and per-observation accumulators, skipping the first
/// `skip` observations of the model's likelihood window.
fn per_draw_stats(eval: &Evaluator, sample: &PosteriorSample, skip: usize) -> Result<DrawStats> {
    let q = sample.q_retained();
    let window = eval.series().len() - eval.spec().start_index() - skip;
    let chunk_ids: Vec<usize> = (0..q.div_ceil(DRAW_CHUNK)).collect();

    let partials: Vec<Result<(Vec<f64>, LseAcc)>> = chunk_ids
        .par_iter()
        .map(|&c| {
            let lo = c * DRAW_CHUNK;
            let hi = (lo + DRAW_CHUNK).min(q);
            let mut dev = Vec::with_capacity(hi - lo);
            let mut acc = LseAcc::new(window);
            for j in lo..hi {
                let params = sample.param(j);
                let logf = eval.per_obs_log_density(&params)?;
                let logf = &logf[skip..];
                let ll: f64 = logf.iter().sum();
                if !ll.is_finite() {
                    return Err(Error::Domain {
                        family: eval.spec().family.name(),
                        message: format!("draw {j} has non-finite likelihood"),
                    });
                }
                dev.push(-2.0 * ll);
                for (t, lf) in logf.iter().enumerate() {
                    acc.push(t, -lf);
                }
            }
            Ok((dev, acc))
        })
        .collect();

    let mut dev = Vec::with_capacity(q);
    let mut lse = LseAcc::new(window);
    for part in partials {
        let (d, acc) = part?;
        dev.extend(d);
        lse.merge(&acc);
    }
    Ok(DrawStats {
        dev,
        neg_logf_lse: lse,
    })
}

/// All three criteria over the model's own likelihood window `t > max(p,q)`.
pub fn criteria_report(
    spec: &ModelSpec,
    series: &CountSeries,
    sample: &PosteriorSample,
) -> Result<CriteriaReport> {
    criteria_report_from(spec, series, sample, spec.start_index())
}

/// Criteria summed from the 0-based time index `window_start` onward.
///
/// When ranking candidate orders the windows must coincide or the shorter
/// ones win by construction (each skipped observation is worth a few units
/// of deviance); callers comparing models pass the largest `max(p,q)` among
/// the candidates. `window_start` may not be smaller than the model's own
/// start index.
pub fn criteria_report_from(
    spec: &ModelSpec,
    series: &CountSeries,
    sample: &PosteriorSample,
    window_start: usize,
) -> Result<CriteriaReport> {
    let eval = Evaluator::new(spec, series)?;
    if sample.q_retained() == 0 {
        return Err(Error::InvalidSpec("posterior sample is empty".into()));
    }
    let r = spec.start_index();
    if window_start < r {
        return Err(Error::InvalidSpec(format!(
            "window_start {window_start} precedes the model's start index {r}"
        )));
    }
    if window_start >= series.len() {
        return Err(Error::InvalidSpec(
            "criteria need a non-empty likelihood window".into(),
        ));
    }
    // Offset into the per-observation vectors, which begin at t = r.
    let skip = window_start - r;
    let stats = per_draw_stats(&eval, sample, skip)?;
    let q = stats.dev.len() as f64;
    let mean_dev = stats.dev.iter().sum::<f64>() / q;

    let mean_params = sample.posterior_mean();
    let dev_at_mean = eval
        .per_obs_log_density(&mean_params)
        .map(|logf| -2.0 * logf[skip..].iter().sum::<f64>())
        .map_err(|_| Error::Domain {
            family: spec.family.name(),
            message: "deviance at the posterior mean is not finite".into(),
        })?;
    if !dev_at_mean.is_finite() {
        return Err(Error::Domain {
            family: spec.family.name(),
            message: "deviance at the posterior mean is not finite".into(),
        });
    }

    let n_eff = series.len() - window_start;
    let dim = spec.dim();

    let mut lpml = 0.0;
    for t in 0..n_eff {
        // log CPO_t = log Q - log sum_j exp(-log f_tj).
        let lse = stats.neg_logf_lse.value(t);
        if !lse.is_finite() {
            return Err(Error::Degenerate(format!(
                "CPO underflowed to zero at observation {}",
                window_start + t + 1
            )));
        }
        lpml += q.ln() - lse;
    }

    Ok(CriteriaReport {
        ebic: mean_dev + dim as f64 * (n_eff as f64).ln(),
        dic: 2.0 * mean_dev - dev_at_mean,
        lpml,
        n_eff,
        dim,
    })
}

/// `DIC = 2 * mean_j D(theta_j) - D(posterior mean)`.
pub fn compute_dic(spec: &ModelSpec, series: &CountSeries, sample: &PosteriorSample) -> Result<f64> {
    Ok(criteria_report(spec, series, sample)?.dic)
}

/// `EBIC = mean_j D(theta_j) + dim * log(n_eff)`.
pub fn compute_ebic(
    spec: &ModelSpec,
    series: &CountSeries,
    sample: &PosteriorSample,
) -> Result<f64> {
    Ok(criteria_report(spec, series, sample)?.ebic)
}

/// Harmonic-mean CPO per observation (log scale) and their sum.
///
/// Returns `(lpml, log_cpo)` with one entry per likelihood-window
/// observation; the model with the largest `lpml` is preferred.
pub fn compute_cpo_lpml(
    spec: &ModelSpec,
    series: &CountSeries,
    sample: &PosteriorSample,
) -> Result<(f64, Vec<f64>)> {
    let eval = Evaluator::new(spec, series)?;
    if sample.q_retained() == 0 {
        return Err(Error::InvalidSpec("posterior sample is empty".into()));
    }
    let stats = per_draw_stats(&eval, sample, 0)?;
    let q = stats.dev.len() as f64;
    let window = series.len() - spec.start_index();
    let mut log_cpo = Vec::with_capacity(window);
    let mut lpml = 0.0;
    for t in 0..window {
        let lse = stats.neg_logf_lse.value(t);
        if !lse.is_finite() {
            return Err(Error::Degenerate(format!(
                "CPO underflowed to zero at observation {}",
                spec.start_index() + t + 1
            )));
        }
        let v = q.ln() - lse;
        log_cpo.push(v);
        lpml += v;
    }
    Ok((lpml, log_cpo))
}

/// Which criterion drives an order selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Ebic,
    Dic,
    Cpo,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Ebic, Criterion::Dic, Criterion::Cpo];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Ebic => "ebic",
            Criterion::Dic => "dic",
            Criterion::Cpo => "cpo",
        }
    }
}

/// Picks the preferred order: minimal EBIC or DIC, maximal LPML. Ties break
/// toward smaller `p + q`, then smaller `p`.
pub fn select_order(
    candidates: &[((usize, usize), CriteriaReport)],
    criterion: Criterion,
) -> Option<(usize, usize)> {
    candidates
        .iter()
        .min_by(|((pa, qa), ra), ((pb, qb), rb)| {
            let va = match criterion {
                Criterion::Ebic => ra.ebic,
                Criterion::Dic => ra.dic,
                Criterion::Cpo => -ra.lpml,
            };
            let vb = match criterion {
                Criterion::Ebic => rb.ebic,
                Criterion::Dic => rb.dic,
                Criterion::Cpo => -rb.lpml,
            };
            va.partial_cmp(&vb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((pa + qa).cmp(&(pb + qb)))
                .then(pa.cmp(pb))
        })
        .map(|(order, _)| *order)
}
