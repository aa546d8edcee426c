//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes plain numbers and strings and returns an SVG or JSON
//! string. Errors become JavaScript exceptions.

use std::fmt::Write;

use hopcurve_core::io::landscape_svg;
use hopcurve_core::learner::RolloutOracle;
use hopcurve_core::sim::TrajectorySample;
use hopcurve_core::{
    extract_sgs, make_environment, map_landscape, rollout, run_learning, EnvLevel, LearnerConfig, ParameterBox, PolicyParams, RobotParams,
    RolloutConfig,
};
use wasm_bindgen::prelude::*;

const THRESHOLD: f64 = 0.01;

fn env_of(name: &str) -> Result<RobotParams, String> {
    let level: EnvLevel = name.parse().map_err(|e: hopcurve_core::Error| e.to_string())?;
    Ok(make_environment(level, &RobotParams::default()))
}

fn policy_of(theta0: f64, theta1: f64) -> Result<PolicyParams, String> {
    let p = PolicyParams::new(theta0, theta1);
    p.validate(&ParameterBox::default()).map_err(|e| e.to_string())?;
    Ok(p)
}

/// Side view of the body path with stance phases drawn thicker.
fn trajectory_svg(samples: &[TrajectorySample]) -> String {
    let (w, h) = (720.0, 220.0);
    let x_max = samples.iter().map(|s| s.x).fold(0.2, f64::max);
    let x_min = samples.iter().map(|s| s.x).fold(0.0, f64::min);
    let z_max = samples.iter().map(|s| s.z).fold(0.3, f64::max);
    let sx = (w - 40.0) / (x_max - x_min);
    let sz = (h - 40.0) / z_max;
    let px = |x: f64| 20.0 + (x - x_min) * sx;
    let pz = |z: f64| h - 20.0 - z * sz;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r##"<line x1="0" y1="{g:.1}" x2="{w}" y2="{g:.1}" stroke="#888"/>"##, g = pz(0.0));
    for pair in samples.windows(2) {
        let stance = pair[1].phase == 'S';
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="{}"/>"#,
            px(pair[0].x),
            pz(pair[0].z),
            px(pair[1].x),
            pz(pair[1].z),
            if stance { "#c0392b" } else { "#2c6fbb" },
            if stance { 2.5 } else { 1.2 }
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn rollout_json(env: &str, theta0: f64, theta1: f64, seed: u64) -> Result<String, String> {
    let robot = env_of(env)?;
    let policy = policy_of(theta0, theta1)?;
    let cfg = RolloutConfig { record_trajectory: true, trajectory_sample_stride: 20, ..RolloutConfig::default() }.with_seed(seed);
    let r = rollout(&policy, &robot, &cfg).map_err(|e| e.to_string())?;
    let traj = r.trajectory.as_deref().unwrap_or_default();
    Ok(serde_json::json!({
        "reward": r.reward,
        "failure": r.failure.map(|k| k.to_string()),
        "failure_time": r.failure_time,
        "hops": r.hop_count,
        "displacement": r.displacement,
        "svg": trajectory_svg(traj),
    })
    .to_string())
}

pub fn map_svg(env: &str, resolution: f64, seed: u64) -> Result<String, String> {
    if !(resolution >= 1.0) {
        return Err(format!("resolution must be at least 1 deg in the browser, got {resolution}"));
    }
    let robot = env_of(env)?;
    let cfg = RolloutConfig::default().with_seed(seed);
    let (grid, _) = map_landscape(&robot, env, &ParameterBox::default(), resolution, &cfg, 1).map_err(|e| e.to_string())?;
    let sgs = extract_sgs(&grid, THRESHOLD).map_err(|e| e.to_string())?;
    Ok(landscape_svg(&grid, &sgs))
}

pub fn learn_json(env: &str, theta0: f64, theta1: f64, steps: usize, seed: u64) -> Result<String, String> {
    let robot = env_of(env)?;
    let init = policy_of(theta0, theta1)?;
    let cfg = LearnerConfig { max_steps: steps.clamp(1, 60), seed, ..LearnerConfig::default() };
    let oracle = RolloutOracle { env: robot, cfg: RolloutConfig::default(), jobs: 1 };
    let trace = run_learning(init, &oracle, &cfg, env).map_err(|e| e.to_string())?;
    serde_json::to_string(&trace.records).map_err(|e| e.to_string())
}

/// One rollout: `{reward, failure, failure_time, hops, displacement, svg}`.
#[wasm_bindgen]
pub fn simulate(env: &str, theta0: f64, theta1: f64, seed: u64) -> Result<String, JsError> {
    rollout_json(env, theta0, theta1, seed).map_err(|e| JsError::new(&e))
}

/// Heatmap SVG of a coarse landscape with its SGS outline.
#[wasm_bindgen]
pub fn map(env: &str, resolution: f64, seed: u64) -> Result<String, JsError> {
    map_svg(env, resolution, seed).map_err(|e| JsError::new(&e))
}

/// Learning trace as a JSON array of step records.
#[wasm_bindgen]
pub fn learn(env: &str, theta0: f64, theta1: f64, steps: usize, seed: u64) -> Result<String, JsError> {
    learn_json(env, theta0, theta1, steps, seed).map_err(|e| JsError::new(&e))
}
