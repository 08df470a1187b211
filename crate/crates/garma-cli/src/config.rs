//! Declarative TOML run configuration.
//!
//! One document drives every subcommand; each section is validated by the
//! module it configures and unknown keys are rejected. `schema_version`
//! must be 1.

use garma::inference::{McmcConfig, PriorSpec};
use garma::model::{CovariateKind, Family, ModelSpec, ParamVector, PredictorForm};
use garma::study::{Scenario, StudyConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSection>,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select: Option<SelectSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<ResidualsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    pub p: usize,
    pub q: usize,
    #[serde(default = "default_clamp")]
    pub clamp_c: f64,
    #[serde(default = "default_covariates")]
    pub covariates: Vec<CovariateKind>,
    #[serde(default = "default_form")]
    pub predictor_form: PredictorForm,
}

fn default_clamp() -> f64 {
    0.1
}

fn default_covariates() -> Vec<CovariateKind> {
    vec![CovariateKind::Intercept]
}

fn default_form() -> PredictorForm {
    PredictorForm::PaperLiteral
}

impl ModelSection {
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            family: self.family,
            p: self.p,
            q: self.q,
            clamp_c: self.clamp_c,
            covariates: self.covariates.clone(),
            predictor_form: self.predictor_form,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: String,
    #[serde(default = "default_y_column")]
    pub y_column: String,
    #[serde(default = "default_divisor")]
    pub scale_divisor: f64,
    #[serde(default = "default_origin")]
    pub origin: usize,
}

fn default_y_column() -> String {
    "y".into()
}

fn default_divisor() -> f64 {
    1.0
}

fn default_origin() -> usize {
    1
}

/// Prior block; omitted means are zero vectors of the right length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_beta: Option<Vec<f64>>,
    #[serde(default = "default_prior_var")]
    pub var_beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_phi: Option<Vec<f64>>,
    #[serde(default = "default_prior_var")]
    pub var_phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_theta: Option<Vec<f64>>,
    #[serde(default = "default_prior_var")]
    pub var_theta: f64,
}

fn default_prior_var() -> f64 {
    200.0
}

impl PriorSection {
    pub fn to_prior(&self, spec: &ModelSpec) -> PriorSpec {
        let mut prior = PriorSpec::default_for(spec);
        prior.var_beta = self.var_beta;
        prior.var_phi = self.var_phi;
        prior.var_theta = self.var_theta;
        if let Some(m) = &self.mean_beta {
            prior.mean_beta = m.clone();
        }
        if let Some(m) = &self.mean_phi {
            prior.mean_phi = m.clone();
        }
        if let Some(m) = &self.mean_theta {
            prior.mean_theta = m.clone();
        }
        prior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub proposal_scale: f64,
}

fn default_iterations() -> usize {
    15_000
}

fn default_burn_in() -> usize {
    1000
}

fn default_thin() -> usize {
    3
}

fn default_seed() -> u64 {
    1
}

fn default_scale() -> f64 {
    1.0
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcSection {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            seed: default_seed(),
            proposal_scale: default_scale(),
        }
    }
}

impl McmcSection {
    pub fn to_mcmc(&self) -> McmcConfig {
        McmcConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            proposal_scale: self.proposal_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
}

impl ParamsSection {
    pub fn to_params(&self) -> ParamVector {
        ParamVector::new(self.beta.clone(), self.phi.clone(), self.theta.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    #[serde(default = "default_sim_burn_in")]
    pub burn_in_sim: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub params: ParamsSection,
}

fn default_sim_burn_in() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSection {
    pub horizon: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_interval_mode")]
    pub interval_mode: garma::forecast::IntervalMode,
    /// Also write one density CSV per horizon.
    #[serde(default)]
    pub emit_density: bool,
}

fn default_delta() -> f64 {
    0.05
}

fn default_interval_mode() -> garma::forecast::IntervalMode {
    garma::forecast::IntervalMode::Percentile
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    pub candidate_orders: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualsSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Estimation,
    Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyScenarioSection {
    pub p: usize,
    pub q: usize,
    pub params: ParamsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub kind: StudyKind,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_sim_burn_in")]
    pub sim_burn_in: usize,
    #[serde(default = "default_candidates")]
    pub candidate_orders: Vec<(usize, usize)>,
    /// Scenarios built from the model section's family/covariates with these
    /// orders and truths; omitted means the negative binomial benchmark set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<Vec<StudyScenarioSection>>,
}

fn default_candidates() -> Vec<(usize, usize)> {
    vec![(1, 1), (1, 2), (2, 1), (2, 2)]
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        config.model.to_spec().validate().map_err(CliError::from_config_err)?;
        Ok(config)
    }

    pub fn spec(&self) -> ModelSpec {
        self.model.to_spec()
    }

    pub fn prior(&self, spec: &ModelSpec) -> PriorSpec {
        self.prior
            .as_ref()
            .map(|p| p.to_prior(spec))
            .unwrap_or_else(|| PriorSpec::default_for(spec))
    }

    pub fn mcmc(&self) -> McmcConfig {
        self.mcmc.to_mcmc()
    }

    /// Assembles the study configuration, defaulting scenarios to the
    /// negative binomial benchmark set when the model family allows it.
    pub fn study_config(&self) -> Result<(StudyKind, StudyConfig), CliError> {
        let section = self
            .study
            .as_ref()
            .ok_or_else(|| CliError::config("config has no [study] section".into()))?;
        let base_spec = self.spec();
        let scenarios: Vec<Scenario> = match &section.scenarios {
            Some(list) => list
                .iter()
                .map(|s| Scenario {
                    spec: base_spec.with_order(s.p, s.q),
                    truth: s.params.to_params(),
                })
                .collect(),
            None => match base_spec.family {
                Family::NegativeBinomial { dispersion_k } => {
                    garma::study::nb_reference_scenarios(dispersion_k)
                }
                _ => {
                    return Err(CliError::config(
                        "[study] needs explicit scenarios for non-negative-binomial families"
                            .into(),
                    ))
                }
            },
        };
        let mut cfg = StudyConfig::new(scenarios, section.n, section.replications, section.master_seed);
        cfg.mcmc = self.mcmc();
        cfg.sim_burn_in = section.sim_burn_in;
        cfg.candidate_orders = section.candidate_orders.clone();
        cfg.validate().map_err(CliError::from_config_err)?;
        Ok((section.kind, cfg))
    }
}
