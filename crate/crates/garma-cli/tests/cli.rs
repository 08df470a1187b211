//! End-to-end runs of the `garma` binary: every subcommand against a small
//! simulated series, exit-code contracts, and artifact determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn garma_bin() -> &'static str {
    env!("CARGO_BIN_EXE_garma")
}

fn run_garma(args: &[&str]) -> Output {
    Command::new(garma_bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

/// Config with a negative binomial GARMA(1,1) model; mcmc settings sized for
/// test speed.
fn base_config(data_path: &Path) -> String {
    format!(
        r#"
schema_version = 1

[model]
p = 1
q = 1

[model.family]
kind = "negative-binomial"
dispersion_k = 15.0

[data]
path = "{data}"

[mcmc]
iterations = 1500
burn_in = 300
thin = 3
seed = 11
proposal_scale = 2.0

[simulate]
n = 200
seed = 42

[simulate.params]
beta = [0.8]
phi = [0.5]
theta = [0.3]

[forecast]
horizon = 9
delta = 0.05
emit_density = true

[select]
candidate_orders = [[1, 0], [1, 1], [1, 2]]

[residuals]
seed = 7

[study]
kind = "estimation"
n = 120
replications = 3
master_seed = 5

[[study.scenarios]]
p = 1
q = 1

[study.scenarios.params]
beta = [0.8]
phi = [0.5]
theta = [0.3]
"#,
        data = data_path.display()
    )
}

struct Workspace {
    _dir: tempfile::TempDir,
    config: PathBuf,
    data: PathBuf,
    root: PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("series.csv");
    let config = root.join("run.toml");
    write(&config, &base_config(&data));
    Workspace {
        _dir: dir,
        config,
        data,
        root,
    }
}

fn simulate_into(ws: &Workspace) {
    let out = ws.root.join("sim");
    let result = run_garma(&[
        "simulate",
        "--config",
        ws.config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "simulate failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    std::fs::copy(out.join("series.csv"), &ws.data).unwrap();
}

#[test]
fn simulate_writes_series_csv() {
    let ws = workspace();
    simulate_into(&ws);
    assert_eq!(line_count(&ws.data), 201); // header + 200 rows
    let first = std::fs::read_to_string(&ws.data)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    // Retained block starts after the warm-up.
    assert!(first.starts_with("201,"), "first data row: {first}");
    let summary = read_json(&ws.root.join("sim/summary.json"));
    assert_eq!(summary["command"], "simulate");
    assert_eq!(summary["n"], 200);
}

#[test]
fn fit_emits_summary_and_draws() {
    let ws = workspace();
    simulate_into(&ws);
    let out = ws.root.join("fit");
    let result = run_garma(&[
        "fit",
        "--config",
        ws.config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "fit failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["command"], "fit");
    let params = summary["parameters"].as_array().unwrap();
    assert_eq!(params.len(), 3);
    assert_eq!(params[0]["name"], "beta0");
    assert!(params[0]["credible_interval"][0].as_f64().unwrap()
        <= params[0]["credible_interval"][1].as_f64().unwrap());
    assert!(summary["acceptance_rate"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["geweke_z"].as_array().unwrap().len(), 3);
    for key in ["ebic", "dic", "lpml"] {
        assert!(summary["criteria"][key].is_number(), "missing criteria.{key}");
    }
    // draws.csv: header + Q rows, Q = floor(1500 / 3).
    assert_eq!(line_count(&out.join("draws.csv")), 1 + 500);
}

#[test]
fn fit_artifacts_are_deterministic() {
    let ws = workspace();
    simulate_into(&ws);
    let out_a = ws.root.join("a");
    let out_b = ws.root.join("b");
    for out in [&out_a, &out_b] {
        let result = run_garma(&[
            "fit",
            "--config",
            ws.config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    for name in ["summary.json", "draws.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn seed_flag_changes_the_chain() {
    let ws = workspace();
    simulate_into(&ws);
    let out_a = ws.root.join("s1");
    let out_b = ws.root.join("s2");
    for (out, seed) in [(&out_a, "100"), (&out_b, "101")] {
        let result = run_garma(&[
            "fit",
            "--config",
            ws.config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(result.status.success());
    }
    let a = std::fs::read(out_a.join("draws.csv")).unwrap();
    let b = std::fs::read(out_b.join("draws.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn select_ranks_candidate_orders() {
    let ws = workspace();
    simulate_into(&ws);
    let out = ws.root.join("select");
    let result = run_garma(&[
        "select",
        "--config",
        ws.config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "select failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let summary = read_json(&out.join("summary.json"));
    let candidates = summary["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 3);
    for c in candidates {
        for key in ["ebic", "dic", "lpml"] {
            assert!(c[key].is_number());
        }
    }
    for key in ["ebic", "dic", "cpo"] {
        assert!(summary["selected"][key].is_array(), "selected.{key} missing");
    }
}

#[test]
fn forecast_writes_requested_horizons() {
    let ws = workspace();
    simulate_into(&ws);
    let out = ws.root.join("fc");
    let result = run_garma(&[
        "forecast",
        "--config",
        ws.config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "forecast failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert_eq!(line_count(&out.join("forecast.csv")), 1 + 9);
    let summary = read_json(&out.join("summary.json"));
    let steps = summary["forecast"]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 9);
    for s in steps {
        let lower = s["lower"].as_u64().unwrap();
        let upper = s["upper"].as_u64().unwrap();
        let point = s["point"].as_f64().unwrap();
        assert!(lower as f64 <= point && point <= upper as f64);
    }
    assert!(out.join("density_h1.csv").exists());
    assert!(out.join("density_h9.csv").exists());
}

#[test]
fn residuals_emit_csv_and_summary() {
    let ws = workspace();
    simulate_into(&ws);
    let out = ws.root.join("resid");
    let result = run_garma(&[
        "residuals",
        "--config",
        ws.config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "residuals failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    // One residual per likelihood-window observation: n - max(p,q).
    assert_eq!(line_count(&out.join("residuals.csv")), 1 + 199);
    let summary = read_json(&out.join("summary.json"));
    for key in ["mean", "sd", "ks_statistic", "ks_pvalue"] {
        assert!(summary["residuals"][key].is_number(), "residuals.{key}");
    }
    assert!(summary["residuals"]["acf"].as_array().unwrap().len() >= 2);
}

#[test]
fn study_reports_recovery_metrics() {
    let ws = workspace();
    let out = ws.root.join("study");
    let result = run_garma(&[
        "study",
        "--config",
        ws.config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "study failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let summary = read_json(&out.join("summary.json"));
    let scenario = &summary["report"]["scenarios"][0];
    assert_eq!(scenario["replications_used"], 3);
    assert_eq!(scenario["parameters"].as_array().unwrap().len(), 3);
    // 3 replications x 3 parameters in long format.
    assert_eq!(line_count(&out.join("estimates.csv")), 1 + 9);
}

#[test]
fn usage_errors_exit_two() {
    let unknown = run_garma(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&unknown.stderr);
    assert!(stderr.contains("Usage") || stderr.contains("usage"), "{stderr}");

    let missing_config = run_garma(&["fit", "--config", "/nonexistent/x.toml"]);
    assert_eq!(missing_config.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&missing_config.stderr);
    assert!(stderr.contains("\"kind\":\"config\""), "{stderr}");
}

#[test]
fn invalid_config_exits_two_with_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    write(
        &config,
        r#"
        [model]
        p = 0
        q = 0
        mystery_key = 1
        [model.family]
        kind = "poisson"
        "#,
    );
    let result = run_garma(&["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("mystery_key"), "{stderr}");
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("série.csv");
    // Binomial size 3 cannot carry counts of 10: a runtime (domain) failure.
    write(&data, "t,y\n1,10\n2,10\n3,10\n4,10\n5,10\n6,10\n7,10\n8,10\n");
    let config = dir.path().join("run.toml");
    write(
        &config,
        &format!(
            r#"
            [model]
            p = 0
            q = 0
            [model.family]
            kind = "binomial"
            size_m = 3
            [data]
            path = "{}"
            [mcmc]
            iterations = 300
            burn_in = 50
            thin = 3
            seed = 1
            "#,
            data.display()
        ),
    );
    let result = run_garma(&["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("\"kind\":\"runtime\""), "{stderr}");
}
