//! Run configuration: JSON schema, `--set` overrides, config hashing.

use abmident_core::bayes::Prior;
use abmident_core::dgp::{ParamVector, SimConfig};
use abmident_core::error::{Error, Result};
use abmident_core::models::{model_by_name, registry_names};
use abmident_core::moments::MomentSpec;
use abmident_core::smd::{GridDim, Thresholds};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Simulate,
    Ergodicity,
    Smd,
    Bayes,
    Indirect,
    Oracle,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Simulate => "simulate",
            Protocol::Ergodicity => "ergodicity",
            Protocol::Smd => "smd",
            Protocol::Bayes => "bayes",
            Protocol::Indirect => "indirect",
            Protocol::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSection {
    pub n_agents: usize,
    pub horizon: usize,
    /// Defaults to 10% of the horizon.
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub noise_scale: f64,
}

impl SimSection {
    pub fn to_sim_config(&self) -> SimConfig {
        let mut c = SimConfig::new(
            self.n_agents,
            self.horizon,
            self.replications,
            self.master_seed,
        )
        .with_noise_scale(self.noise_scale);
        if let Some(b) = self.burn_in {
            c = c.with_burn_in(b);
        }
        c
    }
}

/// How to generate the pseudo-real data a protocol compares against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoRealSection {
    pub horizon: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "one")]
    pub replications: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl PseudoRealSection {
    pub fn to_sim_config(&self, n_agents: usize, noise_scale: f64) -> SimConfig {
        let mut c = SimConfig::new(n_agents, self.horizon, self.replications, self.seed)
            .with_noise_scale(noise_scale);
        if let Some(b) = self.burn_in {
            c = c.with_burn_in(b);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    #[default]
    Identity,
    DiagonalInverseVariance,
    FullInverseCovariance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmdSection {
    pub grid: Vec<GridDim>,
    pub moments: MomentSpec,
    #[serde(default)]
    pub weight: WeightChoice,
    #[serde(default = "default_true")]
    pub crn: bool,
    pub target: PseudoRealSection,
    #[serde(default)]
    pub refine_rounds: usize,
    #[serde(default = "default_shrink")]
    pub refine_shrink: f64,
    /// Hessian step as a fraction of one grid cell per dimension.
    #[serde(default = "default_step_frac")]
    pub hessian_step_frac: f64,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
}

fn default_true() -> bool {
    true
}

fn default_shrink() -> f64 {
    0.5
}

fn default_step_frac() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicitySection {
    pub m: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    pub name: String,
    #[serde(flatten)]
    pub prior: Prior,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcSection {
    pub draws: usize,
    #[serde(default)]
    pub burn_in: usize,
    pub proposal_scales: BTreeMap<String, f64>,
    pub chain_seed: u64,
    #[serde(default)]
    pub jump_prob: f64,
    #[serde(default = "default_jump_scale")]
    pub jump_scale: f64,
}

fn default_jump_scale() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesSection {
    pub priors: Vec<PriorSpec>,
    pub mcmc: McmcSection,
    pub real: PseudoRealSection,
    /// Simulation budget for the per-theta density estimate; falls back to
    /// the main `sim` section.
    #[serde(default)]
    pub density_sim: Option<SimSection>,
    #[serde(default)]
    pub thresholds: Option<abmident_core::bayes::PosteriorThresholds>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndirectSection {
    pub grid: Vec<GridDim>,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default)]
    pub match_tol: Option<f64>,
    #[serde(default)]
    pub exclusion_radius: Option<f64>,
    #[serde(default = "default_true")]
    pub include_resid_var: bool,
}

fn default_p() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSection {
    pub moments: MomentSpec,
    #[serde(default)]
    pub grid: Option<Vec<GridDim>>,
    #[serde(default)]
    pub target: Option<PseudoRealSection>,
    /// Grid resolution of the mean-field Fokker-Planck density (written for
    /// the kirman model only).
    #[serde(default)]
    pub fp_grid_points: Option<usize>,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSection {
    /// Replicate index whose seed is used; defaults to 0.
    #[serde(default)]
    pub replicate: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub sim: SimSection,
    pub protocol: Protocol,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub smd: Option<SmdSection>,
    #[serde(default)]
    pub ergodicity: Option<ErgodicitySection>,
    #[serde(default)]
    pub bayes: Option<BayesSection>,
    #[serde(default)]
    pub indirect: Option<IndirectSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
}

impl RunConfig {
    /// Resolve the model and apply the `params` overrides to its defaults.
    pub fn resolve_model(&self) -> Result<(Box<dyn abmident_core::dgp::Model>, ParamVector)> {
        let model = model_by_name(&self.model).ok_or_else(|| {
            Error::config(format!(
                "model: unknown model `{}` (known: {})",
                self.model,
                registry_names().join(", ")
            ))
        })?;
        let mut params = model.default_params();
        for (name, value) in &self.params {
            params
                .set(name, *value)
                .map_err(|e| Error::config(format!("params.{name}: {e}")))?;
        }
        Ok((model, params))
    }
}

/// Parse a config file's JSON, apply `--set key=value` overrides (dotted
/// paths; a bare key not at the top level falls through to `sim.key`), and
/// deserialize.
pub fn load_config(text: &str, overrides: &[String]) -> Result<(RunConfig, Value)> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{item}` is not KEY=VALUE")))?;
        let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
        let path: Vec<&str> = key.split('.').collect();
        let effective_path: Vec<String> = if path.len() == 1
            && value.get(path[0]).is_none()
            && value.get("sim").and_then(|s| s.get(path[0])).is_some()
        {
            vec!["sim".to_string(), path[0].to_string()]
        } else {
            path.iter().map(|s| s.to_string()).collect()
        };
        let (last, parents) = effective_path.split_last().expect("nonempty path");
        let mut node = &mut value;
        for part in parents {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::config(format!("override `{key}`: path is not an object")))?;
            node = obj
                .entry(part.clone())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        node.as_object_mut()
            .ok_or_else(|| Error::config(format!("override `{key}`: path is not an object")))?
            .insert(last.clone(), parsed);
    }
    let config: RunConfig =
        serde_json::from_value(value.clone()).map_err(|e| Error::Parse(format!("config: {e}")))?;
    Ok((config, value))
}

/// FNV-1a 64-bit hash of the resolved config JSON (object keys are sorted
/// by serde_json's default map, so the hash is canonical).
pub fn config_hash(resolved: &Value) -> String {
    let text = serde_json::to_string(resolved).expect("value serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{hash:016x}")
}
