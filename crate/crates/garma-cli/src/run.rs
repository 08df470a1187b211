//! Subcommand orchestration: config in, JSON/CSV artifacts out.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use garma::criteria::{criteria_report, criteria_report_from, select_order, Criterion, CriteriaReport};
use garma::diagnostics::{geweke_report, quantile_residuals_from_sample};
use garma::forecast::{forecast, ForecastRequest};
use garma::inference::{acceptance_rate, mh_sample, McmcConfig, PosteriorSample, PriorSpec};
use garma::model::{CountSeries, ModelSpec};
use garma::simulate::{simulate_series, SimConfig};
use garma::study::{derive_seed, run_estimation_study, run_selection_study, StudyReport};

use crate::config::{RunConfig, StudyKind};
use crate::data::load_series;
use crate::report::{cell, envelope, num, num_vec, OutDir};
use crate::CliError;

#[derive(Parser)]
#[command(
    name = "garma",
    version,
    about = "Bayesian GARMA modelling for count time series"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for summary.json and CSV artifacts.
    #[arg(long, default_value = "garma-out")]
    out: PathBuf,
    /// Overrides the command's primary seed (simulation seed, sampler seed,
    /// or study master seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic series and write it as CSV.
    Simulate(CommonArgs),
    /// Fit the configured model: posterior summaries, diagnostics, criteria.
    Fit(CommonArgs),
    /// Fit every candidate order and rank them by EBIC, DIC and CPO.
    Select(CommonArgs),
    /// Fit, then forecast with credible intervals.
    Forecast(CommonArgs),
    /// Fit, then compute randomized quantile residuals.
    Residuals(CommonArgs),
    /// Run a Monte-Carlo estimation or selection study.
    Study(CommonArgs),
}

/// Parses argv and executes; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage text; exit 2 on usage errors, 0 for
            // --help/--version.
            return e.exit_code_or_print();
        }
    };
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Fit(a) => ("fit", a),
        Command::Select(a) => ("select", a),
        Command::Forecast(a) => ("forecast", a),
        Command::Residuals(a) => ("residuals", a),
        Command::Study(a) => ("study", a),
    };
    match execute(name, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

trait ClapErrorExt {
    fn exit_code_or_print(self) -> i32;
}

impl ClapErrorExt for clap::Error {
    fn exit_code_or_print(self) -> i32 {
        use clap::error::ErrorKind;
        let code = match self.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
            _ => 2,
        };
        let _ = self.print();
        code
    }
}

fn execute(name: &str, args: &CommonArgs) -> Result<(), CliError> {
    let config = RunConfig::from_path(&args.config)?;
    let out = OutDir::create(&args.out)?;
    match name {
        "simulate" => cmd_simulate(&config, &out, args.seed),
        "fit" => cmd_fit(&config, &out, args.seed),
        "select" => cmd_select(&config, &out, args.seed),
        "forecast" => cmd_forecast(&config, &out, args.seed),
        "residuals" => cmd_residuals(&config, &out, args.seed),
        "study" => cmd_study(&config, &out, args.seed),
        _ => unreachable!("subcommands are exhaustive"),
    }
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn model_json(spec: &ModelSpec) -> Value {
    serde_json::to_value(spec).unwrap_or(Value::Null)
}

fn cmd_simulate(config: &RunConfig, out: &OutDir, seed: Option<u64>) -> Result<(), CliError> {
    let section = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::config("config has no [simulate] section".into()))?;
    let spec = config.spec();
    let params = section.params.to_params();
    params.conforms(&spec).map_err(CliError::from_config_err)?;
    let sim = SimConfig {
        spec: spec.clone(),
        params,
        n: section.n,
        burn_in_sim: section.burn_in_sim,
        seed: seed.unwrap_or(section.seed),
    };
    let series = simulate_series(&sim).map_err(CliError::from_runtime_err)?;

    let rows: Vec<Vec<String>> = series
        .counts()
        .iter()
        .enumerate()
        .map(|(i, &y)| vec![(series.origin() + i).to_string(), y.to_string()])
        .collect();
    out.write_csv("series.csv", &["t", "y"], &rows)?;
    let summary = envelope(
        "simulate",
        json!({
            "model": model_json(&spec),
            "n": series.len(),
            "origin": series.origin(),
            "seed": sim.seed,
            "burn_in_sim": sim.burn_in_sim,
            "mean": num(series.counts().iter().sum::<u64>() as f64 / series.len() as f64),
        }),
    );
    out.write_json("summary.json", &summary)?;
    Ok(())
}

struct FitOutput {
    sample: PosteriorSample,
    criteria: CriteriaReport,
    body: Value,
}

/// Shared fit pipeline: sampler, draw summaries shaped like the estimation
/// tables (mean, variance, equal-tail credible bounds, AP), Geweke z and the
/// selection criteria.
fn fit_model(
    spec: &ModelSpec,
    prior: &PriorSpec,
    series: &CountSeries,
    mcmc: &McmcConfig,
) -> Result<FitOutput, CliError> {
    let sample = mh_sample(spec, prior, series, mcmc).map_err(CliError::from_runtime_err)?;
    let criteria = criteria_report(spec, series, &sample).map_err(CliError::from_runtime_err)?;
    let geweke = geweke_report(&sample);
    if geweke.is_err() {
        eprintln!("warning: Geweke diagnostic unavailable (degenerate chain segment)");
    }

    let names = spec.param_names();
    let means = sample.posterior_mean_flat();
    let vars = sample.posterior_variance_flat();
    let params: Vec<Value> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            json!({
                "name": name,
                "mean": num(means[k]),
                "variance": num(vars[k]),
                // Equal-tail draw quantiles labelled as the credible interval.
                "credible_interval": [
                    num(sample.column_quantile(k, 0.025)),
                    num(sample.column_quantile(k, 0.975)),
                ],
            })
        })
        .collect();

    let body = json!({
        "model": model_json(spec),
        "n": series.len(),
        "parameters": params,
        "acceptance_rate": num(acceptance_rate(&sample)),
        "geweke_z": geweke
            .as_ref()
            .map(|g| num_vec(&g.z))
            .unwrap_or(Value::Null),
        "criteria": {
            "ebic": num(criteria.ebic),
            "dic": num(criteria.dic),
            "lpml": num(criteria.lpml),
        },
    });
    Ok(FitOutput {
        sample,
        criteria,
        body,
    })
}

fn write_draws(out: &OutDir, spec: &ModelSpec, sample: &PosteriorSample) -> Result<(), CliError> {
    let names = spec.param_names();
    let header: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = (0..sample.q_retained())
        .map(|j| sample.draw(j).iter().map(|&v| cell(v)).collect())
        .collect();
    out.write_csv("draws.csv", &header, &rows)?;
    Ok(())
}

fn load_configured_series(config: &RunConfig, spec: &ModelSpec) -> Result<CountSeries, CliError> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| CliError::config("config has no [data] section".into()))?;
    let loaded = load_series(Path::new(&data.path), spec, data)?;
    warn(&loaded.warnings);
    Ok(loaded.series)
}

fn cmd_fit(config: &RunConfig, out: &OutDir, seed: Option<u64>) -> Result<(), CliError> {
    let spec = config.spec();
    let series = load_configured_series(config, &spec)?;
    let prior = config.prior(&spec);
    let mut mcmc = config.mcmc();
    if let Some(s) = seed {
        mcmc.seed = s;
    }
    let fit = fit_model(&spec, &prior, &series, &mcmc)?;
    write_draws(out, &spec, &fit.sample)?;
    out.write_json("summary.json", &envelope("fit", fit.body))?;
    Ok(())
}

fn cmd_select(config: &RunConfig, out: &OutDir, seed: Option<u64>) -> Result<(), CliError> {
    let section = config
        .select
        .as_ref()
        .ok_or_else(|| CliError::config("config has no [select] section".into()))?;
    if section.candidate_orders.is_empty() {
        return Err(CliError::config("select.candidate_orders is empty".into()));
    }
    let base_spec = config.spec();
    let series = load_configured_series(config, &base_spec)?;
    let mut mcmc = config.mcmc();
    if let Some(s) = seed {
        mcmc.seed = s;
    }

    // Rank candidates on the shared likelihood window, otherwise orders
    // with larger max(p,q) win by conditioning away observations.
    let common_start = section
        .candidate_orders
        .iter()
        .map(|&(p, q)| p.max(q))
        .max()
        .unwrap_or(0);
    let mut table = Vec::new();
    let mut reports = Vec::new();
    for (idx, &(p, q)) in section.candidate_orders.iter().enumerate() {
        let spec = base_spec.with_order(p, q);
        spec.validate().map_err(CliError::from_config_err)?;
        let prior = config.prior(&spec);
        let mut cand_mcmc = mcmc.clone();
        cand_mcmc.seed = derive_seed(mcmc.seed, &[idx as u64]);
        let sample =
            mh_sample(&spec, &prior, &series, &cand_mcmc).map_err(CliError::from_runtime_err)?;
        let criteria = criteria_report_from(&spec, &series, &sample, common_start)
            .map_err(CliError::from_runtime_err)?;
        table.push(json!({
            "order": [p, q],
            "ebic": num(criteria.ebic),
            "dic": num(criteria.dic),
            "lpml": num(criteria.lpml),
            "acceptance_rate": num(acceptance_rate(&sample)),
        }));
        reports.push(((p, q), criteria));
    }

    let selected = |criterion: Criterion| -> Value {
        select_order(&reports, criterion)
            .map(|(p, q)| json!([p, q]))
            .unwrap_or(Value::Null)
    };
    let summary = envelope(
        "select",
        json!({
            "model": model_json(&base_spec),
            "n": series.len(),
            "candidates": table,
            "selected": {
                "ebic": selected(Criterion::Ebic),
                "dic": selected(Criterion::Dic),
                "cpo": selected(Criterion::Cpo),
            },
        }),
    );
    out.write_json("summary.json", &summary)?;
    Ok(())
}

fn cmd_forecast(config: &RunConfig, out: &OutDir, seed: Option<u64>) -> Result<(), CliError> {
    let section = config
        .forecast
        .as_ref()
        .ok_or_else(|| CliError::config("config has no [forecast] section".into()))?;
    let spec = config.spec();
    let series = load_configured_series(config, &spec)?;
    let prior = config.prior(&spec);
    let mut mcmc = config.mcmc();
    if let Some(s) = seed {
        mcmc.seed = s;
    }
    let fit = fit_model(&spec, &prior, &series, &mcmc)?;

    let request = ForecastRequest {
        horizon: section.horizon,
        delta: section.delta,
        interval_mode: section.interval_mode,
        future_x: None,
    };
    request.validate().map_err(CliError::from_config_err)?;
    let result =
        forecast(&spec, &fit.sample, &series, &request).map_err(CliError::from_runtime_err)?;

    let rows: Vec<Vec<String>> = (0..request.horizon)
        .map(|h| {
            vec![
                (h + 1).to_string(),
                cell(result.point[h]),
                result.lower[h].to_string(),
                result.upper[h].to_string(),
            ]
        })
        .collect();
    out.write_csv("forecast.csv", &["h", "point", "lower", "upper"], &rows)?;
    if section.emit_density {
        for density in &result.densities {
            let rows: Vec<Vec<String>> = density
                .prob
                .iter()
                .enumerate()
                .map(|(y, p)| vec![y.to_string(), cell(*p)])
                .collect();
            out.write_csv(&format!("density_h{}.csv", density.h), &["y", "prob"], &rows)?;
        }
    }
    write_draws(out, &spec, &fit.sample)?;

    let forecast_json: Vec<Value> = (0..request.horizon)
        .map(|h| {
            json!({
                "h": h + 1,
                "point": num(result.point[h]),
                "lower": result.lower[h],
                "upper": result.upper[h],
                "tail_mass_bound": num(result.densities[h].tail_mass_bound),
            })
        })
        .collect();
    let mut body = fit.body;
    if let Value::Object(map) = &mut body {
        map.insert(
            "forecast".into(),
            json!({
                "horizon": request.horizon,
                "delta": num(request.delta),
                "level": num(1.0 - 2.0 * request.delta),
                "interval_mode": serde_json::to_value(request.interval_mode).unwrap(),
                "steps": forecast_json,
            }),
        );
    }
    out.write_json("summary.json", &envelope("forecast", body))?;
    Ok(())
}

fn cmd_residuals(config: &RunConfig, out: &OutDir, seed: Option<u64>) -> Result<(), CliError> {
    let spec = config.spec();
    let series = load_configured_series(config, &spec)?;
    let prior = config.prior(&spec);
    let mut mcmc = config.mcmc();
    let mut resid_seed = config.residuals.as_ref().map(|r| r.seed).unwrap_or(1);
    if let Some(s) = seed {
        mcmc.seed = s;
        resid_seed = derive_seed(s, &[1]);
    }
    let fit = fit_model(&spec, &prior, &series, &mcmc)?;
    let report = quantile_residuals_from_sample(&spec, &fit.sample, &series, resid_seed)
        .map_err(CliError::from_runtime_err)?;
    if report.clamped > 0 {
        eprintln!(
            "warning: {} residual quantiles clamped away from 0/1",
            report.clamped
        );
    }

    let start = spec.start_index();
    let rows: Vec<Vec<String>> = report
        .residuals
        .iter()
        .enumerate()
        .map(|(i, r)| vec![(series.origin() + start + i).to_string(), cell(*r)])
        .collect();
    out.write_csv("residuals.csv", &["t", "r"], &rows)?;

    let mut body = fit.body;
    if let Value::Object(map) = &mut body {
        map.insert(
            "residuals".into(),
            json!({
                "mean": num(report.mean),
                "sd": num(report.sd),
                "ks_statistic": num(report.ks_statistic),
                "ks_pvalue": num(report.ks_pvalue),
                "acf": num_vec(&report.acf),
                "clamped": report.clamped,
                "seed": resid_seed,
            }),
        );
    }
    out.write_json("summary.json", &envelope("residuals", body))?;
    Ok(())
}

fn study_json(report: &StudyReport) -> Value {
    let scenarios: Vec<Value> = report
        .scenarios
        .iter()
        .map(|s| {
            let params: Vec<Value> = s
                .params
                .iter()
                .map(|p| {
                    json!({
                        "name": p.name,
                        "truth": num(p.truth),
                        "mean": num(p.mean),
                        "var_across": num(p.var_across),
                        "mean_posterior_var": num(p.mean_posterior_var),
                        "cb": p.cb.map(num).unwrap_or(Value::Null),
                        "ce": p.ce.map(num).unwrap_or(Value::Null),
                    })
                })
                .collect();
            json!({
                "order": [s.order.0, s.order.1],
                "n": s.n,
                "replications_used": s.replications_used,
                "failures": s.failures,
                "block_ap": num(s.block_ap),
                "parameters": params,
                "selection": s.selection.as_ref().map(|sel| json!({
                    "candidates": sel.candidates.iter().map(|(p, q)| json!([p, q])).collect::<Vec<_>>(),
                    "ebic": num(sel.ebic),
                    "dic": num(sel.dic),
                    "cpo": num(sel.cpo),
                })).unwrap_or(Value::Null),
            })
        })
        .collect();
    json!({
        "scenarios": scenarios,
        "wall_time_s": num(report.wall_time_s),
    })
}

fn cmd_study(config: &RunConfig, out: &OutDir, seed: Option<u64>) -> Result<(), CliError> {
    let (kind, mut cfg) = config.study_config()?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let report = match kind {
        StudyKind::Estimation => run_estimation_study(&cfg),
        StudyKind::Selection => run_selection_study(&cfg),
    }
    .map_err(CliError::from_runtime_err)?;

    if kind == StudyKind::Estimation {
        // Long-format per-replication estimates for external analysis.
        let mut rows = Vec::new();
        for scen in &report.scenarios {
            let spec = cfg
                .scenarios
                .iter()
                .find(|s| (s.spec.p, s.spec.q) == scen.order)
                .map(|s| s.spec.clone())
                .expect("scenario order is present");
            let names = spec.param_names();
            for (rep, row) in scen.estimates.iter().enumerate() {
                for (k, value) in row.iter().enumerate() {
                    rows.push(vec![
                        scen.order.0.to_string(),
                        scen.order.1.to_string(),
                        rep.to_string(),
                        names[k].clone(),
                        cell(*value),
                    ]);
                }
            }
        }
        out.write_csv(
            "estimates.csv",
            &["p", "q", "replication", "parameter", "estimate"],
            &rows,
        )?;
    }

    let summary = envelope(
        "study",
        json!({
            "kind": serde_json::to_value(kind).unwrap(),
            "n": cfg.n,
            "replications": cfg.replications,
            "master_seed": cfg.master_seed,
            "report": study_json(&report),
        }),
    );
    out.write_json("summary.json", &summary)?;
    Ok(())
}
