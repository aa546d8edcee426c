use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hopcurve_core::{CurriculumSpec, EnvLevel, LearnerConfig, ParameterBox, RobotParams, RolloutConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run can be configured with, read from one JSON document.
/// Command-line flags take precedence over the file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides applied on top of the shipped robot parameters.
    pub robot: serde_json::Map<String, serde_json::Value>,
    pub levels: Option<Vec<EnvLevel>>,
    #[serde(rename = "box")]
    pub bounds: Option<ParameterBox>,
    /// deg
    pub grid_resolution: Option<f64>,
    /// m/s
    pub threshold: Option<f64>,
    pub rollout: RolloutConfig,
    pub learner: LearnerConfig,
    pub curriculum: CurriculumSection,
    pub seed: Option<u64>,
    /// `[theta0, theta1]`, deg.
    pub init: Option<[f64; 2]>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSection {
    pub stall_window: usize,
    pub stall_tolerance: f64,
    pub max_steps_per_env: usize,
    pub probe_next: bool,
    pub allow_switch_back: bool,
    pub total_budget: Option<usize>,
    pub learner_overrides: BTreeMap<EnvLevel, LearnerConfig>,
    /// Rollouts used to score the final policy in the last environment;
    /// not charged to the budget.
    pub evaluation_rollouts: usize,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        let spec = CurriculumSpec::default();
        Self {
            stall_window: spec.stall_window,
            stall_tolerance: spec.stall_tolerance,
            max_steps_per_env: spec.max_steps_per_env,
            probe_next: spec.probe_next,
            allow_switch_back: spec.allow_switch_back,
            total_budget: spec.total_budget,
            learner_overrides: spec.learner_overrides,
            evaluation_rollouts: 5,
        }
    }
}

pub const SEED_ENV: &str = "HOPCURVE_SEED";

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))
    }

    pub fn robot(&self) -> Result<RobotParams, CliError> {
        Ok(RobotParams::with_overrides(&self.robot)?)
    }

    pub fn bounds(&self) -> ParameterBox {
        self.bounds.unwrap_or(self.learner.bounds)
    }

    /// Master seed: flag, then config file, then `HOPCURVE_SEED`, then 0.
    pub fn master_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
            Err(_) => Ok(0),
        }
    }

    pub fn learner(&self, seed: u64) -> LearnerConfig {
        LearnerConfig { seed, bounds: self.bounds(), ..self.learner.clone() }
    }

    pub fn curriculum_spec(&self, seed: u64) -> CurriculumSpec {
        let c = &self.curriculum;
        let bounds = self.bounds();
        CurriculumSpec {
            levels: self.levels.clone().unwrap_or_else(|| EnvLevel::ALL.to_vec()),
            learner: self.learner(seed),
            learner_overrides: c
                .learner_overrides
                .iter()
                .map(|(k, v)| (*k, LearnerConfig { seed, bounds, ..v.clone() }))
                .collect(),
            stall_window: c.stall_window,
            stall_tolerance: c.stall_tolerance,
            max_steps_per_env: c.max_steps_per_env,
            probe_next: c.probe_next,
            allow_switch_back: c.allow_switch_back,
            total_budget: c.total_budget,
        }
    }
}
