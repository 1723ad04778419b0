//! Declarative experiment configuration shared by every subcommand.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::Metric;
use crate::distributions::DistributionSpec;
use crate::error::{FjError, Result};
use crate::simulator::{GrowthAxis, SimulationConfig, StrategyMode};
use crate::strategies::StrategySpec;
use crate::system::{FJSystemSpec, HierarchicalRateModel, ServerSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 1;

fn one() -> f64 {
    1.0
}

fn one_count() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_model: Option<HierarchicalRateModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub servers: Vec<ServerEntry>,
    pub arrival: DistributionSpec,
    #[serde(default = "one")]
    pub phi: f64,
}

/// One or more identical servers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ServerEntry {
    pub service: DistributionSpec,
    #[serde(default = "one")]
    pub pi: f64,
    #[serde(default = "one_count")]
    pub count: usize,
}

/// Explicit σ values, or `points` evenly spaced values from `start` to `stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SigmaGrid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl SigmaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match *self {
            SigmaGrid::Values(ref v) => v.clone(),
            SigmaGrid::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..points).map(|i| start + (stop - start) * i as f64 / (points - 1) as f64).collect(),
            },
        };
        if values.is_empty() {
            return Err(FjError::Config("the sigma grid is empty".into()));
        }
        if let Some(s) = values.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(FjError::Config(format!("sigma values must be finite and >= 0, got {s}")));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub n_jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    /// Zero means bound-only for `compare`.
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: StrategyMode,
    #[serde(default)]
    pub dump_samples: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Best pmf over all strategies on {1..N}.
    Pmf,
    /// Best p for the truncated binomial strategy.
    Binomial,
    /// Largest binomial p within an expected-server budget.
    Budget,
}

fn default_tail() -> f64 {
    1e-3
}

fn default_resolution() -> f64 {
    1e-3
}

fn default_metric() -> Metric {
    Metric::Waiting
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSettings {
    pub objective: Objective,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    /// Fixed σ; when absent σ solves bound(σ) = `tail_target`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default = "default_resolution")]
    pub grid_resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PiSweep {
    /// Zero-based index into the expanded server list.
    pub server: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GrowthSettings {
    pub axis: GrowthAxis,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.999
}

/// Cartesian product of the listed axes applied to the base experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    /// Server counts; the first server entry is replicated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    /// Exponential arrival rates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phi: Vec<f64>,
    /// Binomial strategy parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<PiSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthSettings>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| FjError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(FjError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.system.servers.iter().any(|s| s.count == 0) {
            return Err(FjError::Config("server count must be at least 1".into()));
        }
        let system = self.fj_system()?;
        if let Some(st) = &self.strategy {
            st.validate()?;
            if st.n() != system.n() {
                return Err(FjError::Config(format!(
                    "strategy covers {} servers but the system has {}",
                    st.n(),
                    system.n()
                )));
            }
        }
        if let Some(sigma) = &self.sigma {
            sigma.values()?;
        }
        Ok(())
    }

    /// The expanded system description.
    pub fn fj_system(&self) -> Result<FJSystemSpec> {
        let servers = self
            .system
            .servers
            .iter()
            .flat_map(|e| std::iter::repeat_n(ServerSpec::new(e.service, e.pi), e.count))
            .collect();
        FJSystemSpec::new(servers, self.system.arrival, self.system.phi)
    }

    pub fn sigma_values(&self) -> Result<Vec<f64>> {
        self.sigma
            .as_ref()
            .ok_or_else(|| FjError::Config("this command needs a sigma grid".into()))?
            .values()
    }

    pub fn seed(&self) -> u64 {
        self.simulation.as_ref().and_then(|s| s.seed).unwrap_or(DEFAULT_SEED)
    }

    /// Applies a command-line seed so the echoed config records it.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(sim) = &mut self.simulation {
            sim.seed = Some(seed);
        }
    }

    pub fn simulation_settings(&self) -> Result<&SimulationSettings> {
        self.simulation
            .as_ref()
            .ok_or_else(|| FjError::Config("this command needs a simulation section".into()))
    }

    pub fn simulation_config(&self, seed: u64) -> Result<SimulationConfig> {
        let sim = self.simulation_settings()?;
        let cfg = SimulationConfig {
            system: self.fj_system()?,
            strategy: self.strategy.clone(),
            rate_model: self.rate_model,
            mode: sim.mode,
            n_jobs: sim.n_jobs,
            warmup: sim.warmup,
            replications: sim.replications,
            seed,
        };
        Ok(cfg)
    }

    /// Canonical JSON text; re-parses to an identical experiment.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON schema of the configuration file.
pub fn config_schema() -> String {
    let schema = schemars::schema_for!(ExperimentConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes")
}
