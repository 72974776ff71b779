use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::empirics::EdgePartitionParams;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sampler::{EdgeMode, Hub};
use crate::theory::QuadSpec;

/// One experiment, as read from a TOML file. Unknown keys are rejected.
///
/// ```toml
/// experiment_id = "boolean-lln"
/// seed = 7
/// n = 20000
/// replicas = 20
///
/// [model]
/// d = 1
/// beta = 3.0
/// vertex_case = "poisson"
/// profile = { variant = "indicator" }
/// kernel = { variant = "boolean_sum", d = 1 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    /// Required; there is no clock-based fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Must equal `⌈rho⌉` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub edge_mode: EdgeMode,
    /// Write every sampled graph as an edge-list text file.
    #[serde(default)]
    pub dump_edges: bool,
    #[serde(default)]
    pub quad: QuadSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<EdgePartitionParams>,
    #[serde(default)]
    pub histogram: HistogramSection,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub condition: ConditionSection,
    #[serde(default)]
    pub ldp: LdpSection,
}

fn default_replicas() -> u64 {
    1
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSection {
    /// Absolute length bin edges; defaults to `0, 0.5, …, 5`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_edges: Option<Vec<f64>>,
    /// Bin edges for `length / n^{1/d}`; defaults to ten equal bins on `[0, √d/2]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macroscopic_edges: Option<Vec<f64>>,
}

impl HistogramSection {
    pub fn fixed(&self) -> Vec<f64> {
        self.fixed_edges.clone().unwrap_or_else(|| (0..=10).map(|i| 0.5 * i as f64).collect())
    }

    pub fn macroscopic(&self, d: usize) -> Vec<f64> {
        self.macroscopic_edges.clone().unwrap_or_else(|| {
            let top = 0.5 * (d as f64).sqrt();
            (0..=10).map(|i| top * i as f64 / 10.0).collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    /// Upper end of the tabulated `Λ(w)`.
    pub lambda_w_max: f64,
    pub lambda_grid: usize,
    /// Points `s` at which `P(S > s)` is reported; defaults to ten points in `[ρ, k)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_grid: Option<Vec<f64>>,
    /// Hubs for the `π_{a,b}` table; skipped when empty.
    pub hubs: Vec<Hub>,
    pub a_max: usize,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self { lambda_w_max: 1e3, lambda_grid: 256, s_grid: None, hubs: Vec::new(), a_max: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Weight bin edges for the conditional mean degree; defaults to
    /// quarter-decades from 1 to `n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_bins: Option<Vec<f64>>,
}

impl SimulateSection {
    pub fn bins(&self, n: f64) -> Vec<f64> {
        self.weight_bins.clone().unwrap_or_else(|| {
            let top = (4.0 * n.log10()).ceil() as i32;
            std::iter::once(0.0).chain((1..=top.max(1)).map(|i| 10f64.powf(i as f64 / 4.0))).collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionSection {
    /// Fixed hubs; when empty, hubs are drawn per replica from the Y-law
    /// with uniform locations.
    pub hubs: Vec<Hub>,
    pub a_max: usize,
    /// Per-replica wave-measure values for the macroscopic bins.
    pub wave: bool,
}

impl Default for ConditionSection {
    fn default() -> Self {
        Self { hubs: Vec::new(), a_max: 64, wave: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpSection {
    /// Largest β admitted by the feasibility guard.
    pub max_beta: f64,
    /// Skip the guard.
    pub force: bool,
}

impl Default for LdpSection {
    fn default() -> Self {
        Self { max_beta: 2.6, force: false }
    }
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg(e.to_string()))
    }

    /// Checks everything that does not depend on the command.
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(cfg("seed required"));
        }
        if self.experiment_id.is_empty() || self.experiment_id.contains([',', '\n', '"']) {
            return Err(cfg("experiment_id must be non-empty and free of commas, quotes and newlines"));
        }
        self.model.validate().map_err(as_config)?;
        self.quad.validate().map_err(as_config)?;
        if let Some(rho) = self.rho {
            let k = crate::theory::rho_order(rho).map_err(as_config)?;
            if let Some(given) = self.k {
                if given != k {
                    return Err(cfg(format!("k = {given} does not match ⌈rho⌉ = {k}")));
                }
            }
        } else if self.k.is_some() {
            return Err(cfg("k given without rho"));
        }
        for &n in self.n.iter().chain(self.n_list.iter().flatten()) {
            if !(n > 0.0 && n.is_finite()) {
                return Err(cfg(format!("n must be positive, got {n}")));
            }
        }
        if self.threads == 0 {
            return Err(cfg("threads must be at least 1"));
        }
        if let Some(p) = &self.partition {
            p.validate(&self.model).map_err(as_config)?;
        }
        for h in self.theory.hubs.iter().chain(&self.condition.hubs) {
            h.validate(self.model.d).map_err(as_config)?;
        }
        if !(self.theory.lambda_w_max > 1.0) || self.theory.lambda_grid < 32 {
            return Err(cfg("theory.lambda_w_max must exceed 1 and theory.lambda_grid must be at least 32"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn k(&self) -> Option<usize> {
        self.rho.map(|r| r.ceil() as usize)
    }

    pub fn require_n(&self) -> Result<f64> {
        self.n.ok_or_else(|| cfg("this command needs `n`"))
    }

    pub fn require_rho(&self) -> Result<f64> {
        self.rho.ok_or_else(|| cfg("this command needs `rho`"))
    }

    pub fn partition_params(&self) -> EdgePartitionParams {
        self.partition.unwrap_or_else(|| EdgePartitionParams::defaults(&self.model))
    }
}

/// Contract violations in user-supplied values are configuration errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::Contract(m) => Error::Config(m),
        other => other,
    }
}
