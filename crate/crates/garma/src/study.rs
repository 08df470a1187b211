//! Monte-Carlo study harness: replicated simulate-then-fit experiments for
//! parameter recovery (corrected bias / corrected error / acceptance rate)
//! and order selection via EBIC, DIC and CPO.
//!
//! Replication seeds are derived from the master seed and the replication
//! index, never from scheduling, so parallel and sequential runs produce
//! identical reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{criteria_report_from, select_order, Criterion};
use crate::error::{Error, Result};
use crate::inference::{acceptance_rate, mh_sample, McmcConfig, PriorSpec};
use crate::model::{ModelSpec, ParamVector};
use crate::simulate::{simulate_series, SimConfig};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed stream indexed by (master, tags...); stable across
/// platforms and scheduling.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

/// One generating model: a specification plus its true parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: ModelSpec,
    pub truth: ParamVector,
}

/// Negative binomial benchmark scenarios used by the recovery and selection
/// studies: four (p,q) orders with moderate coefficient values.
pub fn nb_reference_scenarios(dispersion_k: f64) -> Vec<Scenario> {
    let family = crate::model::Family::NegativeBinomial { dispersion_k };
    let rows: [(usize, usize, f64, Vec<f64>, Vec<f64>); 4] = [
        (1, 1, 0.80, vec![0.50], vec![0.30]),
        (1, 2, 1.00, vec![0.30], vec![0.40, 0.25]),
        (2, 1, 0.55, vec![0.30, 0.40], vec![0.20]),
        (2, 2, 0.65, vec![0.30, 0.40], vec![0.25, 0.35]),
    ];
    rows.into_iter()
        .map(|(p, q, beta0, phi, theta)| Scenario {
            spec: ModelSpec::new(family, p, q),
            truth: ParamVector::new(vec![beta0], phi, theta),
        })
        .collect()
}

/// Study layout: scenarios, series length, replication count, sampler
/// settings and (for selection studies) the candidate orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<Scenario>,
    pub n: usize,
    pub replications: usize,
    pub mcmc: McmcConfig,
    pub sim_burn_in: usize,
    pub candidate_orders: Vec<(usize, usize)>,
    pub master_seed: u64,
}

impl StudyConfig {
    pub fn new(scenarios: Vec<Scenario>, n: usize, replications: usize, master_seed: u64) -> Self {
        StudyConfig {
            scenarios,
            n,
            replications,
            mcmc: McmcConfig::new(0),
            sim_burn_in: 200,
            candidate_orders: vec![(1, 1), (1, 2), (2, 1), (2, 2)],
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::InvalidSpec("study needs at least one scenario".into()));
        }
        if self.replications < 1 {
            return Err(Error::InvalidSpec("replications must be >= 1".into()));
        }
        let mut orders = self.candidate_orders.clone();
        orders.sort_unstable();
        orders.dedup();
        if orders.len() != self.candidate_orders.len() {
            return Err(Error::InvalidSpec(
                "candidate orders must be distinct".into(),
            ));
        }
        self.mcmc.validate()?;
        for s in &self.scenarios {
            s.spec.validate()?;
            s.truth.conforms(&s.spec)?;
        }
        Ok(())
    }
}

/// Recovery metrics for one parameter across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStudySummary {
    pub name: String,
    pub truth: f64,
    /// Mean of the per-replication posterior means.
    pub mean: f64,
    /// Variance of the posterior means across replications.
    pub var_across: f64,
    /// Mean of the per-replication posterior variances.
    pub mean_posterior_var: f64,
    /// Corrected bias; absent when the truth is zero.
    pub cb: Option<f64>,
    /// Corrected error; absent when it is not computable (m < 2 or
    /// degenerate estimates).
    pub ce: Option<f64>,
}

/// Proportion of replications in which each criterion picked the true order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub candidates: Vec<(usize, usize)>,
    pub ebic: f64,
    pub dic: f64,
    pub cpo: f64,
}

/// Study results for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub order: (usize, usize),
    pub n: usize,
    pub params: Vec<ParamStudySummary>,
    /// Mean block acceptance rate across replications.
    pub block_ap: f64,
    pub replications_used: usize,
    pub failures: usize,
    pub selection: Option<SelectionSummary>,
    /// Per-replication posterior means (row per replication), kept for CSV
    /// export; not serialized into JSON summaries.
    #[serde(skip)]
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenarios: Vec<ScenarioReport>,
    pub wall_time_s: f64,
}

/// Mean absolute relative deviation of the estimates from a nonzero truth.
pub fn corrected_bias(truth: f64, estimates: &[f64]) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::Domain {
            family: "corrected_bias",
            message: "truth must be nonzero".into(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::InvalidSpec("no estimates supplied".into()));
    }
    Ok(estimates
        .iter()
        .map(|e| ((truth - e) / truth).abs())
        .sum::<f64>()
        / estimates.len() as f64)
}

/// Root of the mean squared error divided by the (unbiased) sample variance
/// of the estimates; near one for well-calibrated unbiased estimators.
pub fn corrected_error(truth: f64, estimates: &[f64]) -> Result<f64> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::InvalidSpec(
            "corrected error needs at least two estimates".into(),
        ));
    }
    if estimates.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Degenerate(
            "estimates have zero sample variance".into(),
        ));
    }
    let mean = estimates.iter().sum::<f64>() / m as f64;
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (m - 1) as f64;
    if var <= 0.0 {
        return Err(Error::Degenerate(
            "estimates have zero sample variance".into(),
        ));
    }
    let mse = estimates
        .iter()
        .map(|e| (e - truth) * (e - truth))
        .sum::<f64>()
        / m as f64;
    Ok((mse / var).sqrt())
}

struct RepFit {
    estimate: Vec<f64>,
    posterior_var: Vec<f64>,
    ap: f64,
}

fn fit_one(
    spec: &ModelSpec,
    series: &crate::model::CountSeries,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<RepFit> {
    let prior = PriorSpec::default_for(spec);
    let mut mcmc = mcmc.clone();
    mcmc.seed = seed;
    let sample = mh_sample(spec, &prior, series, &mcmc)?;
    Ok(RepFit {
        estimate: sample.posterior_mean_flat(),
        posterior_var: sample.posterior_variance_flat(),
        ap: acceptance_rate(&sample),
    })
}

fn summarize_params(
    spec: &ModelSpec,
    truth: &ParamVector,
    estimates: &[Vec<f64>],
    posterior_vars: &[Vec<f64>],
) -> Vec<ParamStudySummary> {
    let names = spec.param_names();
    let truth_flat = truth.to_flat();
    let m = estimates.len();
    names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = estimates.iter().map(|row| row[k]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let var_across = if m > 1 {
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64
            } else {
                0.0
            };
            let mean_posterior_var =
                posterior_vars.iter().map(|row| row[k]).sum::<f64>() / m as f64;
            ParamStudySummary {
                name,
                truth: truth_flat[k],
                mean,
                var_across,
                mean_posterior_var,
                cb: corrected_bias(truth_flat[k], &col).ok(),
                ce: corrected_error(truth_flat[k], &col).ok(),
            }
        })
        .collect()
}

fn check_failure_rate(failures: usize, total: usize) -> Result<()> {
    if failures * 20 > total {
        return Err(Error::TooManyFailures {
            what: "replications",
            failed: failures,
            total,
        });
    }
    Ok(())
}

/// Simulate -> fit -> aggregate for every scenario: per-parameter recovery
/// metrics and the mean block acceptance rate.
pub fn run_estimation_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut scenarios = Vec::with_capacity(cfg.scenarios.len());
    for (s_idx, scenario) in cfg.scenarios.iter().enumerate() {
        let outcomes: Vec<Option<RepFit>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let sim_seed = derive_seed(cfg.master_seed, &[s_idx as u64, rep as u64, 0]);
                let fit_seed = derive_seed(cfg.master_seed, &[s_idx as u64, rep as u64, 1]);
                let sim = SimConfig {
                    spec: scenario.spec.clone(),
                    params: scenario.truth.clone(),
                    n: cfg.n,
                    burn_in_sim: cfg.sim_burn_in,
                    seed: sim_seed,
                };
                let series = simulate_series(&sim).ok()?;
                fit_one(&scenario.spec, &series, &cfg.mcmc, fit_seed).ok()
            })
            .collect();

        let failures = outcomes.iter().filter(|o| o.is_none()).count();
        check_failure_rate(failures, cfg.replications)?;
        let fits: Vec<RepFit> = outcomes.into_iter().flatten().collect();
        let estimates: Vec<Vec<f64>> = fits.iter().map(|f| f.estimate.clone()).collect();
        let posterior_vars: Vec<Vec<f64>> = fits.iter().map(|f| f.posterior_var.clone()).collect();
        let block_ap = fits.iter().map(|f| f.ap).sum::<f64>() / fits.len().max(1) as f64;

        scenarios.push(ScenarioReport {
            order: (scenario.spec.p, scenario.spec.q),
            n: cfg.n,
            params: summarize_params(&scenario.spec, &scenario.truth, &estimates, &posterior_vars),
            block_ap,
            replications_used: fits.len(),
            failures,
            selection: None,
            estimates,
        });
    }
    Ok(StudyReport {
        scenarios,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Per replication, fits every candidate order to a series simulated from
/// the scenario truth and tallies how often each criterion selects the true
/// order.
pub fn run_selection_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut scenarios = Vec::with_capacity(cfg.scenarios.len());
    for (s_idx, scenario) in cfg.scenarios.iter().enumerate() {
        let truth_order = (scenario.spec.p, scenario.spec.q);
        if !cfg.candidate_orders.contains(&truth_order) {
            return Err(Error::InvalidSpec(format!(
                "candidate orders must include the true order {truth_order:?}"
            )));
        }
        // Candidates are ranked on a shared likelihood window, otherwise the
        // higher-order models win simply by conditioning away observations.
        let common_start = cfg
            .candidate_orders
            .iter()
            .map(|&(p, q)| p.max(q))
            .max()
            .unwrap_or(0);

        // Per replication: the criterion-selected order, or None on failure.
        let outcomes: Vec<Option<[(usize, usize); 3]>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let sim_seed = derive_seed(cfg.master_seed, &[s_idx as u64, rep as u64, 0]);
                let sim = SimConfig {
                    spec: scenario.spec.clone(),
                    params: scenario.truth.clone(),
                    n: cfg.n,
                    burn_in_sim: cfg.sim_burn_in,
                    seed: sim_seed,
                };
                let series = simulate_series(&sim).ok()?;
                let mut reports = Vec::with_capacity(cfg.candidate_orders.len());
                for (c_idx, &(p, q)) in cfg.candidate_orders.iter().enumerate() {
                    let cand_spec = scenario.spec.with_order(p, q);
                    let fit_seed =
                        derive_seed(cfg.master_seed, &[s_idx as u64, rep as u64, 2 + c_idx as u64]);
                    let prior = PriorSpec::default_for(&cand_spec);
                    let mut mcmc = cfg.mcmc.clone();
                    mcmc.seed = fit_seed;
                    let sample = mh_sample(&cand_spec, &prior, &series, &mcmc).ok()?;
                    let report =
                        criteria_report_from(&cand_spec, &series, &sample, common_start).ok()?;
                    reports.push(((p, q), report));
                }
                Some([
                    select_order(&reports, Criterion::Ebic)?,
                    select_order(&reports, Criterion::Dic)?,
                    select_order(&reports, Criterion::Cpo)?,
                ])
            })
            .collect();

        let failures = outcomes.iter().filter(|o| o.is_none()).count();
        check_failure_rate(failures, cfg.replications)?;
        let used: Vec<[(usize, usize); 3]> = outcomes.into_iter().flatten().collect();
        let tally = |idx: usize| -> f64 {
            used.iter().filter(|sel| sel[idx] == truth_order).count() as f64
                / used.len().max(1) as f64
        };
        scenarios.push(ScenarioReport {
            order: truth_order,
            n: cfg.n,
            params: Vec::new(),
            block_ap: f64::NAN,
            replications_used: used.len(),
            failures,
            selection: Some(SelectionSummary {
                candidates: cfg.candidate_orders.clone(),
                ebic: tally(0),
                dic: tally(1),
                cpo: tally(2),
            }),
            estimates: Vec::new(),
        });
    }
    Ok(StudyReport {
        scenarios,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;
    use approx::assert_relative_eq;

    #[test]
    fn corrected_bias_examples() {
        assert_eq!(corrected_bias(0.5, &[0.5, 0.5]).unwrap(), 0.0);
        assert_relative_eq!(
            corrected_bias(0.5, &[0.4, 0.6]).unwrap(),
            0.2,
            epsilon = 1e-12
        );
        assert!(corrected_bias(0.0, &[0.1]).is_err());
    }

    #[test]
    fn corrected_error_examples() {
        // estimates (0.4, 0.6), truth 0.5: MSE = 0.01, Var = 0.02.
        assert_relative_eq!(
            corrected_error(0.5, &[0.4, 0.6]).unwrap(),
            0.5_f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(corrected_error(0.5, &[0.4]).is_err());
        assert!(corrected_error(0.5, &[0.4, 0.4, 0.4]).is_err());
    }

    #[test]
    fn corrected_error_near_one_for_unbiased_estimates() {
        // Dyadic symmetric deviations keep the sample mean exactly on the
        // truth, where MSE = Var * (m-1)/m.
        let truth = 1.0;
        let mut estimates = Vec::new();
        for j in 1..=32 {
            let d = j as f64 / 64.0;
            estimates.push(truth + d);
            estimates.push(truth - d);
        }
        let m = estimates.len() as f64;
        let ce = corrected_error(truth, &estimates).unwrap();
        assert_relative_eq!(ce, ((m - 1.0) / m).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn seed_derivation_is_stable_and_spreads() {
        assert_eq!(derive_seed(42, &[1, 2]), derive_seed(42, &[1, 2]));
        assert_ne!(derive_seed(42, &[1, 2]), derive_seed(42, &[2, 1]));
        assert_ne!(derive_seed(42, &[0, 0]), derive_seed(43, &[0, 0]));
    }

    fn tiny_estimation_cfg(m: usize, seed: u64) -> StudyConfig {
        let scenario = Scenario {
            spec: ModelSpec::new(Family::Poisson, 0, 0),
            truth: ParamVector::new(vec![1.2], vec![], vec![]),
        };
        let mut cfg = StudyConfig::new(vec![scenario], 120, m, seed);
        cfg.mcmc = McmcConfig {
            iterations: 900,
            burn_in: 100,
            thin: 3,
            seed: 0,
            proposal_scale: 1.0,
        };
        cfg
    }

    #[test]
    fn estimation_study_recovers_simple_model() {
        let report = run_estimation_study(&tiny_estimation_cfg(8, 7)).unwrap();
        let scen = &report.scenarios[0];
        assert_eq!(scen.replications_used, 8);
        assert_eq!(scen.estimates.len(), 8);
        let p = &scen.params[0];
        assert_eq!(p.name, "beta0");
        assert!((p.mean - 1.2).abs() < 0.1, "mean {}", p.mean);
        assert!(p.cb.unwrap() < 0.2);
        assert!(scen.block_ap > 0.0 && scen.block_ap <= 1.0);
    }

    #[test]
    fn estimation_study_is_reproducible() {
        let a = run_estimation_study(&tiny_estimation_cfg(4, 11)).unwrap();
        let b = run_estimation_study(&tiny_estimation_cfg(4, 11)).unwrap();
        assert_eq!(a.scenarios, b.scenarios);
        let c = run_estimation_study(&tiny_estimation_cfg(4, 12)).unwrap();
        assert_ne!(a.scenarios[0].estimates, c.scenarios[0].estimates);
    }

    #[test]
    fn parallel_and_sequential_studies_agree() {
        // Replication seeds are index-derived, so any thread schedule must
        // produce the identical report.
        let cfg = tiny_estimation_cfg(6, 21);
        let sequential = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_estimation_study(&cfg))
            .unwrap();
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_estimation_study(&cfg))
            .unwrap();
        assert_eq!(sequential.scenarios, parallel.scenarios);
    }

    #[test]
    fn report_metrics_match_naive_recomputation() {
        let cfg = tiny_estimation_cfg(6, 33);
        let report = run_estimation_study(&cfg).unwrap();
        let scen = &report.scenarios[0];
        for (k, param) in scen.params.iter().enumerate() {
            let col: Vec<f64> = scen.estimates.iter().map(|row| row[k]).collect();
            assert_eq!(param.cb, corrected_bias(param.truth, &col).ok());
            assert_eq!(param.ce, corrected_error(param.truth, &col).ok());
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert_eq!(param.mean, mean);
        }
    }

    #[test]
    fn single_replication_reports_estimate_without_ce() {
        let report = run_estimation_study(&tiny_estimation_cfg(1, 5)).unwrap();
        let scen = &report.scenarios[0];
        assert_eq!(scen.estimates.len(), 1);
        assert!(scen.params[0].ce.is_none());
        assert!(scen.params[0].cb.is_some());
    }

    #[test]
    fn selection_with_single_candidate_is_certain() {
        let scenario = Scenario {
            spec: ModelSpec::new(Family::Poisson, 1, 0),
            truth: ParamVector::new(vec![0.8], vec![0.4], vec![]),
        };
        let mut cfg = StudyConfig::new(vec![scenario], 100, 2, 3);
        cfg.candidate_orders = vec![(1, 0)];
        cfg.mcmc = McmcConfig {
            iterations: 600,
            burn_in: 100,
            thin: 3,
            seed: 0,
            proposal_scale: 1.0,
        };
        let report = run_selection_study(&cfg).unwrap();
        let sel = report.scenarios[0].selection.as_ref().unwrap();
        assert_eq!(sel.ebic, 1.0);
        assert_eq!(sel.dic, 1.0);
        assert_eq!(sel.cpo, 1.0);
    }

    #[test]
    fn selection_requires_truth_among_candidates() {
        let scenario = Scenario {
            spec: ModelSpec::new(Family::Poisson, 1, 0),
            truth: ParamVector::new(vec![0.8], vec![0.4], vec![]),
        };
        let mut cfg = StudyConfig::new(vec![scenario], 100, 2, 3);
        cfg.candidate_orders = vec![(2, 0)];
        assert!(run_selection_study(&cfg).is_err());
    }

    #[test]
    fn reference_scenarios_have_expected_orders() {
        let scenarios = nb_reference_scenarios(15.0);
        let orders: Vec<(usize, usize)> = scenarios
            .iter()
            .map(|s| (s.spec.p, s.spec.q))
            .collect();
        assert_eq!(orders, vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
        for s in &scenarios {
            s.truth.conforms(&s.spec).unwrap();
        }
    }
}
