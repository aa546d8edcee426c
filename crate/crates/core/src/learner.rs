//! Finite-difference stochastic gradient ascent over `(theta0, theta1)`.
//!
//! Rewards come from a [`RewardOracle`], normally live rollouts in one
//! environment, but any deterministic field works for testing. Every
//! evaluation gets its own seed derived from the learner seed, the step
//! index and the probe position, so runs replay exactly.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::landscape::run_indexed;
use crate::model::RobotParams;
use crate::policy::{clip_to_box, ParameterBox, PolicyParams};
use crate::seed;
use crate::sim::{rollout, RolloutConfig};

/// Deg per (m/s)/deg.
pub const DEFAULT_LEARNING_RATE: f64 = 2.5;

/// Tags separating the seed streams of one learner.
const STREAM_EVAL: u64 = 1;
const STREAM_ESCAPE: u64 = 2;

pub trait RewardOracle: Sync {
    /// Reward of `policy`, m/s, using `seed` for any randomness.
    fn reward(&self, policy: &PolicyParams, seed: u64) -> Result<f64>;

    /// Upper bound on concurrent evaluations.
    fn jobs(&self) -> usize {
        1
    }
}

/// Live rollouts in one environment.
#[derive(Clone, Debug)]
pub struct RolloutOracle {
    pub env: RobotParams,
    pub cfg: RolloutConfig,
    pub jobs: usize,
}

impl RewardOracle for RolloutOracle {
    fn reward(&self, policy: &PolicyParams, seed: u64) -> Result<f64> {
        Ok(rollout(policy, &self.env, &self.cfg.with_seed(seed))?.reward)
    }

    fn jobs(&self) -> usize {
        self.jobs
    }
}

/// A deterministic reward field over `(theta0, theta1)`, degrees.
pub struct FieldOracle<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> RewardOracle for FieldOracle<F> {
    fn reward(&self, policy: &PolicyParams, _seed: u64) -> Result<f64> {
        Ok((self.0)(policy.theta0, policy.theta1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// deg
    pub perturbation: f64,
    /// deg per (m/s)/deg
    pub learning_rate: f64,
    pub max_steps: usize,
    pub rollouts_per_eval: usize,
    /// (m/s)/deg; below this the step direction is random.
    pub min_gradient_norm: f64,
    /// Length of the random escape step, deg.
    pub random_step_size: f64,
    pub seed: u64,
    #[serde(rename = "box")]
    pub bounds: ParameterBox,
    /// Stop once this many consecutive steps change the reward by less
    /// than `stop_tolerance` (relative).
    pub stop_window: usize,
    pub stop_tolerance: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            perturbation: 1.0,
            learning_rate: DEFAULT_LEARNING_RATE,
            max_steps: 30,
            rollouts_per_eval: 1,
            min_gradient_norm: 1e-4,
            random_step_size: 1.0,
            seed: 0,
            bounds: ParameterBox::default(),
            stop_window: 5,
            stop_tolerance: 0.01,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.perturbation > 0.0 && self.perturbation.is_finite(), || {
            format!("perturbation must be > 0, got {}", self.perturbation)
        })?;
        ensure(self.learning_rate > 0.0 && self.learning_rate.is_finite(), || {
            format!("learning_rate must be > 0, got {}", self.learning_rate)
        })?;
        ensure(self.max_steps >= 1, || "max_steps must be >= 1".into())?;
        ensure(self.rollouts_per_eval >= 1, || "rollouts_per_eval must be >= 1".into())?;
        ensure(self.min_gradient_norm >= 0.0, || "min_gradient_norm must be >= 0".into())?;
        ensure(self.random_step_size >= 0.0 && self.random_step_size.is_finite(), || {
            "random_step_size must be >= 0".into()
        })?;
        ensure(self.stop_window >= 1, || "stop_window must be >= 1".into())?;
        self.bounds.validate()
    }

    /// Rollouts spent by one gradient estimate.
    pub fn rollouts_per_step(&self) -> usize {
        4 * self.rollouts_per_eval + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    /// (m/s)/deg along theta0 and theta1.
    pub gradient: [f64; 2],
    /// m/s
    pub center_reward: f64,
    pub rollouts: usize,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.gradient[0].hypot(self.gradient[1])
    }
}

/// Central differences on each axis. Perturbed points are clipped to the
/// box and the divisor is the clipped distance. `eval_id` keys the seeds
/// so distinct estimates draw distinct noise.
pub fn estimate_gradient(oracle: &dyn RewardOracle, p: &PolicyParams, cfg: &LearnerConfig, eval_id: u64) -> Result<GradientEstimate> {
    let delta = cfg.perturbation;
    let n = cfg.rollouts_per_eval;
    let shifted = |axis: usize, sign: f64| {
        let mut q = *p;
        if axis == 0 {
            q.theta0 += sign * delta;
        } else {
            q.theta1 += sign * delta;
        }
        clip_to_box(q, &cfg.bounds)
    };
    // probe 0 is the centre, then (+0, -0, +1, -1)
    let probes = [*p, shifted(0, 1.0), shifted(0, -1.0), shifted(1, 1.0), shifted(1, -1.0)];
    let jobs: Vec<(usize, usize)> = std::iter::once((0, 0)).chain((1..5).flat_map(|k| (0..n).map(move |r| (k, r)))).collect();
    let base = seed::derive(cfg.seed, &[STREAM_EVAL, eval_id]);
    let values = run_indexed(jobs.len(), oracle.jobs(), |idx| {
        let (k, r) = jobs[idx];
        oracle.reward(&probes[k], seed::derive(base, &[k as u64, r as u64]))
    })?;
    let mut mean = [0.0; 5];
    for (&(k, _), v) in jobs.iter().zip(&values) {
        mean[k] += v / if k == 0 { 1.0 } else { n as f64 };
    }
    let diff = |plus: usize, minus: usize, axis: usize| {
        let span = probes[plus].as_array()[axis] - probes[minus].as_array()[axis];
        if span > 0.0 {
            (mean[plus] - mean[minus]) / span
        } else {
            0.0
        }
    };
    Ok(GradientEstimate {
        gradient: [diff(1, 2, 0), diff(3, 4, 1)],
        center_reward: mean[0],
        rollouts: jobs.len(),
    })
}

/// One ascent step. A gradient below `min_gradient_norm` gives no usable
/// direction, so the step goes `random_step_size` along a direction drawn
/// from `escape_seed`.
pub fn learn_step(p: &PolicyParams, gradient: [f64; 2], cfg: &LearnerConfig, escape_seed: u64) -> PolicyParams {
    let norm = gradient[0].hypot(gradient[1]);
    let (d0, d1) = if norm >= cfg.min_gradient_norm && norm > 0.0 {
        (cfg.learning_rate * gradient[0], cfg.learning_rate * gradient[1])
    } else {
        let angle = ChaCha8Rng::seed_from_u64(escape_seed).random_range(0.0..TAU);
        (cfg.random_step_size * angle.cos(), cfg.random_step_size * angle.sin())
    };
    clip_to_box(PolicyParams { theta0: p.theta0 + d0, theta1: p.theta1 + d1, omega: p.omega }, &cfg.bounds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub params: [f64; 2],
    /// Reward at `params`, m/s.
    pub reward: f64,
    pub gradient: [f64; 2],
    pub env: String,
    /// Cumulative rollouts including this step's estimate.
    pub rollouts: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_HEADER: &str = "step,theta0_deg,theta1_deg,reward_mps,grad0,grad1,env,rollouts";

impl LearningTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn rollouts(&self) -> usize {
        self.records.last().map_or(0, |r| r.rollouts)
    }

    /// True when each of the last `window` steps moved the reward by less
    /// than `tolerance` relative to the step before. A window of zero
    /// rewards does not count as converged.
    pub fn stalled(&self, window: usize, tolerance: f64) -> bool {
        let n = self.records.len();
        if n < window + 1 {
            return false;
        }
        self.records[n - window - 1..].windows(2).all(|w| {
            let (a, b) = (w[0].reward, w[1].reward);
            a > 0.0 && ((b - a) / a).abs() < tolerance
        })
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step, r.params[0], r.params[1], r.reward, r.gradient[0], r.gradient[1], r.env, r.rollouts
            )?;
        }
        Ok(())
    }
}

/// Learner position between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    pub params: PolicyParams,
    pub cfg: LearnerConfig,
    pub step: usize,
    pub rollouts: usize,
}

impl Learner {
    pub fn new(init: PolicyParams, cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        init.validate(&cfg.bounds)?;
        Ok(Self { params: init, cfg, step: 0, rollouts: 0 })
    }

    /// Estimates the gradient at the current params, records it, and moves.
    pub fn iterate(&mut self, oracle: &dyn RewardOracle, env_label: &str) -> Result<TraceRecord> {
        let est = estimate_gradient(oracle, &self.params, &self.cfg, self.step as u64)?;
        self.rollouts += est.rollouts;
        let record = TraceRecord {
            step: self.step,
            params: self.params.as_array(),
            reward: est.center_reward,
            gradient: est.gradient,
            env: env_label.to_string(),
            rollouts: self.rollouts,
        };
        let escape = seed::derive(self.cfg.seed, &[STREAM_ESCAPE, self.step as u64]);
        self.params = learn_step(&self.params, est.gradient, &self.cfg, escape);
        self.step += 1;
        Ok(record)
    }
}

/// Runs up to `cfg.max_steps` steps, stopping early once the reward stalls.
pub fn run_learning(init: PolicyParams, oracle: &dyn RewardOracle, cfg: &LearnerConfig, env_label: &str) -> Result<LearningTrace> {
    let mut learner = Learner::new(init, cfg.clone())?;
    let mut trace = LearningTrace::default();
    while learner.step < cfg.max_steps {
        trace.records.push(learner.iterate(oracle, env_label)?);
        if trace.stalled(cfg.stop_window, cfg.stop_tolerance) {
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn step_arithmetic_and_clamp() {
        let cfg = LearnerConfig::default();
        let p = learn_step(&PolicyParams::new(10.0, 20.0), [2.0, 1.0], &cfg, 0);
        assert_abs_diff_eq!(p.theta0, 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta1, 22.5, epsilon = 1e-12);
        let q = learn_step(&PolicyParams::new(39.0, 44.0), [2.0, 2.0], &cfg, 0);
        assert_eq!(q.as_array(), [40.0, 45.0]);
    }

    #[test]
    fn zero_gradient_takes_random_step() {
        let cfg = LearnerConfig::default();
        let p = PolicyParams::new(20.0, 25.0);
        for s in 0..20 {
            let q = learn_step(&p, [0.0, 0.0], &cfg, s);
            assert_abs_diff_eq!((q.theta0 - 20.0).hypot(q.theta1 - 25.0), cfg.random_step_size, epsilon = 1e-12);
        }
    }

    #[test]
    fn clipped_divisor() {
        let cfg = LearnerConfig::default();
        let oracle = FieldOracle(|a: f64, b: f64| 3.0 * a + 2.0 * b);
        let est = estimate_gradient(&oracle, &PolicyParams::new(0.0, 45.0), &cfg, 0).unwrap();
        assert_abs_diff_eq!(est.gradient[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.gradient[1], 2.0, epsilon = 1e-12);
        assert_eq!(est.rollouts, 5);
    }

    #[test]
    fn stall_needs_positive_rewards() {
        let rec = |r: f64, s: usize| TraceRecord { step: s, params: [0.0, 0.0], reward: r, gradient: [0.0; 2], env: "x".into(), rollouts: s };
        let zeros = LearningTrace { records: (0..8).map(|s| rec(0.0, s)).collect() };
        assert!(!zeros.stalled(5, 0.01));
        let flat = LearningTrace { records: (0..8).map(|s| rec(0.3, s)).collect() };
        assert!(flat.stalled(5, 0.01));
        let rising = LearningTrace { records: (0..8).map(|s| rec(0.1 + 0.05 * s as f64, s)).collect() };
        assert!(!rising.stalled(5, 0.01));
    }
}
