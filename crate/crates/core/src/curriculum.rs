//! Learning across a sequence of environments, easiest first.
//!
//! Each stage runs the finite-difference learner in one environment and
//! hands its params to the next stage once learning stalls and a probe
//! gradient in the next environment is usable. A [`PolicyMemory`] keeps the
//! best policy seen per environment for switching back.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::landscape::{extract_sgs, funnel_check, node_components, FunnelReport, LandscapeGrid, SgsSummary};
use crate::learner::{estimate_gradient, GradientEstimate, Learner, LearnerConfig, LearningTrace, RewardOracle, RolloutOracle};
use crate::model::RobotParams;
use crate::policy::PolicyParams;
use crate::seed;
use crate::sim::{make_environment, EnvLevel, RolloutConfig};

/// Probe evaluations use their own seed stream.
const STREAM_PROBE: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSpec {
    pub levels: Vec<EnvLevel>,
    /// Learner settings shared by all stages.
    pub learner: LearnerConfig,
    /// Per-environment replacements for `learner`, keyed by level name.
    pub learner_overrides: BTreeMap<EnvLevel, LearnerConfig>,
    pub stall_window: usize,
    pub stall_tolerance: f64,
    pub max_steps_per_env: usize,
    pub probe_next: bool,
    /// Permits a level to reappear after a harder one.
    pub allow_switch_back: bool,
    /// Rollouts available to the whole run, probes included.
    pub total_budget: Option<usize>,
}

impl Default for CurriculumSpec {
    fn default() -> Self {
        Self {
            levels: EnvLevel::ALL.to_vec(),
            learner: LearnerConfig::default(),
            learner_overrides: BTreeMap::new(),
            stall_window: 5,
            stall_tolerance: 0.01,
            max_steps_per_env: 10,
            probe_next: true,
            allow_switch_back: false,
            total_budget: Some(150),
        }
    }
}

impl CurriculumSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.levels.is_empty(), || "curriculum needs at least one environment".into())?;
        ensure(self.stall_window >= 1, || "stall_window must be >= 1".into())?;
        ensure(self.max_steps_per_env >= 1, || "max_steps_per_env must be >= 1".into())?;
        if !self.allow_switch_back {
            ensure(self.levels.windows(2).all(|w| w[0] < w[1]), || {
                "levels must get strictly harder unless allow_switch_back is set".into()
            })?;
        }
        self.learner.validate()?;
        self.learner_overrides.values().try_for_each(LearnerConfig::validate)
    }

    /// Learner settings of stage `index`; stage 0 keeps the configured seed.
    pub fn learner_for(&self, index: usize) -> LearnerConfig {
        let level = self.levels[index];
        let mut cfg = self.learner_overrides.get(&level).cloned().unwrap_or_else(|| self.learner.clone());
        if index > 0 {
            cfg.seed = seed::derive(cfg.seed, &[index as u64]);
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub params: PolicyParams,
    /// m/s
    pub reward: f64,
}

/// Best policy observed in each environment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyMemory {
    pub best: BTreeMap<String, MemoryEntry>,
}

impl PolicyMemory {
    pub fn record(&mut self, env: &str, params: PolicyParams, reward: f64) {
        match self.best.get(env) {
            Some(e) if e.reward >= reward => {}
            _ => {
                self.best.insert(env.to_string(), MemoryEntry { params, reward });
            }
        }
    }

    pub fn get(&self, env: &str) -> Option<&MemoryEntry> {
        self.best.get(env)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchDecision {
    pub switch: bool,
    /// The next-environment probe, when one was run.
    pub probe: Option<GradientEstimate>,
}

/// Decides whether to leave the current environment.
///
/// Stalling (or running out of steps) makes the learner ready to move on.
/// With `probe_next`, the move also needs a usable gradient in the next
/// environment at `params`; the probe's rollouts are reported so the
/// caller can charge them.
pub fn should_switch(
    trace: &LearningTrace,
    params: &PolicyParams,
    next: &dyn RewardOracle,
    spec: &CurriculumSpec,
    learner: &LearnerConfig,
    probe_id: u64,
) -> Result<SwitchDecision> {
    ensure(!trace.is_empty(), || "should_switch needs at least one step".into())?;
    let ready = trace.stalled(spec.stall_window, spec.stall_tolerance) || trace.len() >= spec.max_steps_per_env;
    if !ready {
        return Ok(SwitchDecision { switch: false, probe: None });
    }
    if !spec.probe_next {
        return Ok(SwitchDecision { switch: true, probe: None });
    }
    let probe_cfg = LearnerConfig { seed: seed::derive(learner.seed, &[STREAM_PROBE]), ..learner.clone() };
    let est = estimate_gradient(next, params, &probe_cfg, probe_id)?;
    Ok(SwitchDecision { switch: est.norm() >= learner.min_gradient_norm && est.norm() > 0.0, probe: Some(est) })
}

/// One environment of a curriculum.
pub struct Stage<'a> {
    pub label: String,
    pub oracle: &'a dyn RewardOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub env: String,
    pub trace: LearningTrace,
    pub probe_rollouts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumResult {
    pub stages: Vec<StageTrace>,
    pub memory: PolicyMemory,
    pub final_params: PolicyParams,
    pub total_rollouts: usize,
}

/// Runs the curriculum over the environments of `spec.levels`.
pub fn run_curriculum(init: PolicyParams, spec: &CurriculumSpec, base: &RobotParams, rollout_cfg: &RolloutConfig, jobs: usize) -> Result<CurriculumResult> {
    spec.validate()?;
    let oracles: Vec<RolloutOracle> = spec
        .levels
        .iter()
        .map(|&l| RolloutOracle { env: make_environment(l, base), cfg: rollout_cfg.clone(), jobs })
        .collect();
    let stages: Vec<Stage> = spec
        .levels
        .iter()
        .zip(&oracles)
        .map(|(l, o)| Stage { label: l.label().to_string(), oracle: o })
        .collect();
    run_stages(init, spec, &stages)
}

/// Curriculum over arbitrary reward oracles, one per entry of `spec.levels`.
pub fn run_stages(init: PolicyParams, spec: &CurriculumSpec, stages: &[Stage]) -> Result<CurriculumResult> {
    spec.validate()?;
    ensure(stages.len() == spec.levels.len(), || format!("{} stages for {} levels", stages.len(), spec.levels.len()))?;
    init.validate(&spec.learner.bounds)?;
    let budget = spec.total_budget.unwrap_or(usize::MAX);
    let mut memory = PolicyMemory::default();
    let mut current = init;
    let mut total = 0usize;
    let mut out = Vec::new();

    'stages: for (index, stage) in stages.iter().enumerate() {
        let cfg = spec.learner_for(index);
        let revisit = stages[..index].iter().any(|s| s.label == stage.label);
        if revisit {
            if let Some(entry) = memory.get(&stage.label) {
                current = entry.params;
            }
        }
        let last = index + 1 == stages.len();
        let mut learner = Learner::new(current, cfg.clone())?;
        let mut st = StageTrace { env: stage.label.clone(), trace: LearningTrace::default(), probe_rollouts: 0 };
        // without a global budget a stage cannot wait on the probe forever
        let step_cap = if spec.total_budget.is_some() { usize::MAX } else { 2 * spec.max_steps_per_env };

        loop {
            if total + cfg.rollouts_per_step() > budget || learner.step >= step_cap {
                current = learner.params;
                out.push(st);
                break 'stages;
            }
            let mut record = learner.iterate(stage.oracle, &stage.label)?;
            total += cfg.rollouts_per_step();
            record.rollouts = total;
            memory.record(&stage.label, PolicyParams { theta0: record.params[0], theta1: record.params[1], omega: current.omega }, record.reward);
            st.trace.records.push(record);
            current = learner.params;

            if last {
                let done = if spec.total_budget.is_some() {
                    false
                } else {
                    learner.step >= spec.max_steps_per_env || st.trace.stalled(cfg.stop_window, cfg.stop_tolerance)
                };
                if done {
                    break;
                }
                continue;
            }
            let next = &stages[index + 1];
            let ready = st.trace.stalled(spec.stall_window, spec.stall_tolerance) || st.trace.len() >= spec.max_steps_per_env;
            if ready && spec.probe_next && total + cfg.rollouts_per_step() > budget {
                continue;
            }
            let decision = should_switch(&st.trace, &current, next.oracle, spec, &cfg, learner.step as u64)?;
            if let Some(p) = decision.probe {
                total += p.rollouts;
                st.probe_rollouts += p.rollouts;
            }
            if decision.switch {
                break;
            }
        }
        out.push(st);
    }

    Ok(CurriculumResult { stages: out, memory, final_params: current, total_rollouts: total })
}

/// Per-environment SGS statistics for a criteria report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub env: String,
    pub sgs: SgsSummary,
    /// Connected SGS regions after a 3x3 mean filter.
    pub smoothed_components: usize,
    /// Whether the smoothed SGS forms one region that holds the peak.
    pub single_peak_region: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub threshold: f64,
    pub environments: Vec<EnvSummary>,
    /// Consecutive pairs along the sequence.
    pub funnels: Vec<FunnelReport>,
    /// SGS area fractions strictly shrink along the sequence.
    pub fraction_ordering_holds: bool,
    pub all_funnels_contained: bool,
    /// Hardware SGS fractions for the three mass settings, for comparison.
    pub hardware_reference: BTreeMap<String, f64>,
}

/// SGS fractions measured on the hardware at 0.69, 0.84 and 1.0 of full weight.
pub fn hardware_reference() -> BTreeMap<String, f64> {
    [("beginner", 0.46), ("intermediate", 0.25), ("original", 0.20)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Summarises how well a sequence of landscapes funnels into each other.
pub fn criteria_report(landscapes: &[LandscapeGrid], threshold: f64) -> Result<CriteriaReport> {
    ensure(landscapes.len() >= 2, || "criteria report needs at least two landscapes".into())?;
    let first = &landscapes[0];
    for g in landscapes {
        g.validate()?;
        if g.theta0_values != first.theta0_values || g.theta1_values != first.theta1_values {
            return Err(Error::Parameter(format!(
                "landscape `{}` is sampled on a different grid than `{}`",
                g.env_label, first.env_label
            )));
        }
    }
    let mut environments = Vec::new();
    for g in landscapes {
        let sgs = extract_sgs(g, threshold)?;
        let smooth = g.smoothed();
        let smooth_sgs = extract_sgs(&smooth, threshold)?;
        let components = node_components(&smooth, threshold);
        let single = components == 1 && smooth_sgs.components == 1 && smooth_sgs.peak_reward > threshold;
        environments.push(EnvSummary { env: g.env_label.clone(), sgs, smoothed_components: components, single_peak_region: single });
    }
    let funnels: Vec<FunnelReport> = environments
        .windows(2)
        .map(|w| funnel_check(&w[0].env, &w[0].sgs, &w[1].env, &w[1].sgs))
        .collect();
    let fraction_ordering_holds = environments.windows(2).all(|w| w[0].sgs.area_fraction > w[1].sgs.area_fraction);
    let all_funnels_contained = funnels.iter().all(|f| f.peak_contained);
    Ok(CriteriaReport {
        threshold,
        environments,
        funnels,
        fraction_ordering_holds,
        all_funnels_contained,
        hardware_reference: hardware_reference(),
    })
}
