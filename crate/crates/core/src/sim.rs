//! Hybrid flight/stance dynamics of the hopper and the rollout evaluator.
//!
//! The leg is massless. In flight the body is ballistic and the hip follows
//! its reference kinematically, limited to [`RobotParams::hip_slew_limit`].
//! In stance the foot is pinned and the joint torques reach the body through
//! the inverse-transpose of the stance Jacobian. Both phases use fixed-step
//! RK4 with the hip reference held constant over a step; touchdown and
//! liftoff times are refined by bisection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::model::{RobotParams, Vec2};
use crate::policy::{HipReference, PolicyParams};

/// Bisection stops once the event time is bracketed this tightly, s.
const EVENT_TIME_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    Flight,
    Stance { contact_x: f64 },
}

impl Phase {
    pub fn code(&self) -> char {
        match self {
            Phase::Flight => 'F',
            Phase::Stance { .. } => 'S',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub pos: Vec2,
    pub vel: Vec2,
    pub hip: f64,
    pub hip_rate: f64,
    pub ankle: f64,
    pub ankle_rate: f64,
    pub phase: Phase,
    /// Ground reaction on the foot, N. Zero in flight.
    pub contact_force: Vec2,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.pos.is_finite()
            && self.vel.is_finite()
            && [self.hip, self.hip_rate, self.ankle, self.ankle_rate].iter().all(|v| v.is_finite())
            && self.contact_force.is_finite()
    }

    /// Body kinetic plus gravitational energy, J.
    pub fn mechanical_energy(&self, env: &RobotParams) -> f64 {
        let v2 = self.vel.x * self.vel.x + self.vel.z * self.vel.z;
        0.5 * env.body_mass * v2 + env.body_mass * env.gravity * (self.pos.z - env.ground_level)
    }

    pub fn foot(&self, env: &RobotParams) -> Vec2 {
        env.forward_kinematics(self.pos, self.hip, self.ankle).foot
    }

    pub fn knee(&self, env: &RobotParams) -> Vec2 {
        env.forward_kinematics(self.pos, self.hip, self.ankle).knee
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    AnkleStrike,
    BodyGround,
    HipRangeExceeded,
    KinematicError,
    Diverged,
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FailureKind::AnkleStrike => "ankle-strike",
            FailureKind::BodyGround => "body-ground",
            FailureKind::HipRangeExceeded => "hip-range-exceeded",
            FailureKind::KinematicError => "kinematic-error",
            FailureKind::Diverged => "diverged",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    Touchdown,
    Liftoff,
    Failure(FailureKind),
}

/// Joint-space quantities of a stance configuration.
#[derive(Clone, Copy, Debug)]
struct StanceEval {
    hip: f64,
    hip_rate: f64,
    ankle: f64,
    ankle_rate: f64,
    /// Force of the leg on the body, equal to the ground reaction on the foot.
    force: Vec2,
}

fn stance_eval(env: &RobotParams, foot: Vec2, pos: Vec2, vel: Vec2, reference: HipReference) -> std::result::Result<StanceEval, FailureKind> {
    let r = pos - foot;
    let d = r.norm();
    let (l1, l2) = (env.upper_len, env.lower_len);
    if !(d > (l1 - l2).abs() && d < l1 + l2) {
        return Err(if d.is_finite() { FailureKind::KinematicError } else { FailureKind::Diverged });
    }
    let ankle = ((l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2)).clamp(-1.0, 1.0).acos();
    let hip = (-r.x).atan2(r.z);
    let (s, c) = (-r.x / d, r.z / d);
    let dd = l1 * l2 * ankle.sin() / d;
    let det = dd * d;
    if !(det.abs() >= 1e-9) {
        return Err(FailureKind::Diverged);
    }
    let ankle_rate = (-s * vel.x + c * vel.z) / dd;
    let hip_rate = (-c * vel.x - s * vel.z) / d;

    let mut tau_ankle = env.ankle_stiffness_rot * (env.ankle_rest_angle - ankle) + env.ankle_preload_torque
        - env.ankle_damping * ankle_rate;
    let penetration = ankle - env.ankle_rest_angle;
    let compressed = penetration <= 0.0;
    if compressed {
        // a compressed leg only pushes; the ground cannot pull the foot
        tau_ankle = tau_ankle.max(0.0);
    } else {
        let stop = -env.hardstop_stiffness * penetration - env.hardstop_damping * ankle_rate;
        tau_ankle += stop.min(0.0);
    }
    let tau_hip = (env.hip_kp * (reference.angle - hip) + env.hip_kd * (reference.rate - hip_rate))
        .clamp(-env.hip_torque_max, env.hip_torque_max);

    let force = Vec2::new((-d * s * tau_ankle - dd * c * tau_hip) / det, (d * c * tau_ankle - dd * s * tau_hip) / det);
    Ok(StanceEval { hip, hip_rate, ankle, ankle_rate, force })
}

/// Leg-length rate if the foot were pinned at `foot`.
fn radial_velocity(pos: Vec2, vel: Vec2, foot: Vec2) -> f64 {
    let r = pos - foot;
    (vel.x * r.x + vel.z * r.z) / r.norm()
}

/// A swing that would push the foot into the ground while the body moves
/// away from it cannot land (the leg is already at its stop); the ground
/// blocks the swing and the foot drags at ground level instead.
fn ground_blocked_hip(env: &RobotParams, pos: Vec2, vel: Vec2, hip: f64) -> Option<f64> {
    let d = env.rest_leg_length();
    let foot = pos + Vec2::new(hip.sin(), -hip.cos()) * d;
    if foot.z >= env.ground_level || radial_velocity(pos, vel, foot) < 0.0 {
        return None;
    }
    let height = pos.z - env.ground_level;
    if height >= d || height <= 0.0 {
        return None;
    }
    Some((height / d).acos().copysign(hip))
}

fn flight_hip_rate(env: &RobotParams, hip: f64, reference: HipReference) -> f64 {
    let slew = env.hip_slew_limit();
    (reference.rate + env.hip_kp / env.hip_kd * (reference.angle - hip)).clamp(-slew, slew)
}

/// Advances the state by `dt` within its current phase. No phase switching
/// happens here; see [`detect_events`].
pub fn step(state: &SimState, env: &RobotParams, reference: HipReference, dt: f64) -> std::result::Result<SimState, FailureKind> {
    let mut next = *state;
    next.t = state.t + dt;
    match state.phase {
        Phase::Flight => {
            let g = env.gravity;
            next.pos = Vec2::new(
                state.pos.x + state.vel.x * dt,
                state.pos.z + state.vel.z * dt - 0.5 * g * dt * dt,
            );
            next.vel = Vec2::new(state.vel.x, state.vel.z - g * dt);
            let h = state.hip;
            let k1 = flight_hip_rate(env, h, reference);
            let k2 = flight_hip_rate(env, h + 0.5 * dt * k1, reference);
            let k3 = flight_hip_rate(env, h + 0.5 * dt * k2, reference);
            let k4 = flight_hip_rate(env, h + dt * k3, reference);
            next.hip = h + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            next.hip_rate = flight_hip_rate(env, next.hip, reference);
            if let Some(blocked) = ground_blocked_hip(env, next.pos, next.vel, next.hip) {
                next.hip_rate = (blocked - h) / dt;
                next.hip = blocked;
            }
            next.ankle = env.ankle_rest_angle;
            next.ankle_rate = 0.0;
            next.contact_force = Vec2::default();
        }
        Phase::Stance { contact_x } => {
            let foot = Vec2::new(contact_x, env.ground_level);
            let inv_m = 1.0 / env.body_mass;
            let gravity = Vec2::new(0.0, -env.gravity);
            let accel = |p: Vec2, v: Vec2| -> std::result::Result<Vec2, FailureKind> {
                Ok(stance_eval(env, foot, p, v, reference)?.force * inv_m + gravity)
            };
            let (p0, v0) = (state.pos, state.vel);
            let a1 = accel(p0, v0)?;
            let (p2, v2) = (p0 + v0 * (0.5 * dt), v0 + a1 * (0.5 * dt));
            let a2 = accel(p2, v2)?;
            let (p3, v3) = (p0 + v2 * (0.5 * dt), v0 + a2 * (0.5 * dt));
            let a3 = accel(p3, v3)?;
            let (p4, v4) = (p0 + v3 * dt, v0 + a3 * dt);
            let a4 = accel(p4, v4)?;
            next.pos = p0 + (v0 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
            next.vel = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
            let e = stance_eval(env, foot, next.pos, next.vel, reference)?;
            next.hip = e.hip;
            next.hip_rate = e.hip_rate;
            next.ankle = e.ankle;
            next.ankle_rate = e.ankle_rate;
            next.contact_force = e.force;
        }
    }
    if !next.is_finite() {
        return Err(FailureKind::Diverged);
    }
    Ok(next)
}

fn failure_of(next: &SimState, env: &RobotParams) -> Option<FailureKind> {
    if !next.is_finite() {
        return Some(FailureKind::Diverged);
    }
    let pose = env.forward_kinematics(next.pos, next.hip, next.ankle);
    if pose.knee.z <= env.ground_level {
        return Some(FailureKind::AnkleStrike);
    }
    if next.pos.z < env.min_body_height {
        return Some(FailureKind::BodyGround);
    }
    if next.hip < env.hip_angle_min || next.hip > env.hip_angle_max {
        return Some(FailureKind::HipRangeExceeded);
    }
    None
}

fn touches_down(prev: &SimState, next: &SimState, env: &RobotParams) -> bool {
    let before = prev.foot(env).z;
    let foot = next.foot(env);
    foot.z <= env.ground_level && foot.z < before && radial_velocity(next.pos, next.vel, foot) < 0.0
}

/// Classifies what happened between two consecutive states. Failures take
/// precedence over phase transitions.
pub fn detect_events(prev: &SimState, next: &SimState, env: &RobotParams) -> Option<Event> {
    if let Some(kind) = failure_of(next, env) {
        return Some(Event::Failure(kind));
    }
    match prev.phase {
        Phase::Flight if touches_down(prev, next, env) => Some(Event::Touchdown),
        // the ground can push but not pull
        Phase::Stance { .. } if next.contact_force.z <= 0.0 => Some(Event::Liftoff),
        _ => None,
    }
}

/// Finds the earliest sub-step at which `event` fires, to [`EVENT_TIME_TOL`].
fn refine_event(state: &SimState, env: &RobotParams, reference: HipReference, dt: f64, event: Event) -> std::result::Result<(f64, SimState), FailureKind> {
    let (mut lo, mut hi) = (0.0, dt);
    let mut at_hi = step(state, env, reference, dt)?;
    while hi - lo > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        let s = step(state, env, reference, mid)?;
        if detect_events(state, &s, env) == Some(event) {
            hi = mid;
            at_hi = s;
        } else {
            lo = mid;
        }
    }
    Ok((hi, at_hi))
}

fn apply_transition(state: &mut SimState, env: &RobotParams, event: Event) {
    match event {
        Event::Touchdown => {
            let foot = state.foot(env);
            state.phase = Phase::Stance { contact_x: foot.x };
        }
        Event::Liftoff => {
            state.phase = Phase::Flight;
            state.ankle = env.ankle_rest_angle;
            state.ankle_rate = 0.0;
            state.contact_force = Vec2::default();
        }
        Event::Failure(_) => {}
    }
}

/// Environment presets: the full robot and two mass-reduced training environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvLevel {
    Beginner,
    Intermediate,
    Original,
}

impl EnvLevel {
    pub const ALL: [EnvLevel; 3] = [EnvLevel::Beginner, EnvLevel::Intermediate, EnvLevel::Original];

    pub fn body_mass(self) -> f64 {
        match self {
            EnvLevel::Beginner => 0.415,
            EnvLevel::Intermediate => 0.505,
            EnvLevel::Original => 0.600,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EnvLevel::Beginner => "beginner",
            EnvLevel::Intermediate => "intermediate",
            EnvLevel::Original => "original",
        }
    }
}

impl std::fmt::Display for EnvLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for EnvLevel {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beginner" => Ok(EnvLevel::Beginner),
            "intermediate" => Ok(EnvLevel::Intermediate),
            "original" => Ok(EnvLevel::Original),
            other => Err(crate::Error::Parameter(format!(
                "unknown environment `{other}` (expected beginner, intermediate or original)"
            ))),
        }
    }
}

/// `base` with the body mass of the requested training environment.
pub fn make_environment(level: EnvLevel, base: &RobotParams) -> RobotParams {
    RobotParams { body_mass: level.body_mass(), ..base.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    /// Initial interval excluded from the average speed, s.
    pub settle_time: f64,
    pub seed: u64,
    pub record_trajectory: bool,
    pub trajectory_sample_stride: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            duration: 5.0,
            dt: 1e-4,
            settle_time: 0.5,
            seed: 0,
            record_trajectory: false,
            trajectory_sample_stride: 10,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.dt > 0.0 && self.dt.is_finite(), || format!("dt must be > 0, got {}", self.dt))?;
        ensure(self.settle_time > 0.0 && self.duration > self.settle_time && self.duration.is_finite(), || {
            format!("need duration > settle_time > 0, got {} and {}", self.duration, self.settle_time)
        })?;
        ensure(self.trajectory_sample_stride >= 1, || "trajectory_sample_stride must be >= 1".into())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
    pub hip: f64,
    pub ankle: f64,
    pub phase: char,
    /// Vertical ground reaction, N.
    pub contact_force: f64,
}

impl From<&SimState> for TrajectorySample {
    fn from(s: &SimState) -> Self {
        Self {
            t: s.t,
            x: s.pos.x,
            z: s.pos.z,
            vx: s.vel.x,
            vz: s.vel.z,
            hip: s.hip,
            ankle: s.ankle,
            phase: s.phase.code(),
            contact_force: s.contact_force.z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// Average forward speed over the scored window, m/s; zero on failure.
    pub reward: f64,
    pub failure: Option<FailureKind>,
    /// Time of the failure event, s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_time: Option<f64>,
    /// Forward travel over the scored window, m.
    pub displacement: f64,
    /// Length of the scored window, s.
    pub duration: f64,
    pub hop_count: usize,
    pub peak_height: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectorySample>>,
}

/// Initial condition: standing on the foot at x = 0 with the ankle at its
/// stop and the leg at the policy offset.
pub fn initial_state(policy: &PolicyParams, env: &RobotParams) -> SimState {
    let hip = policy.theta0.to_radians();
    let foot = Vec2::new(0.0, env.ground_level);
    let pos = foot + Vec2::new(-hip.sin(), hip.cos()) * env.rest_leg_length();
    let mut s = SimState {
        t: 0.0,
        pos,
        vel: Vec2::default(),
        hip,
        hip_rate: 0.0,
        ankle: env.ankle_rest_angle,
        ankle_rate: 0.0,
        phase: Phase::Stance { contact_x: 0.0 },
        contact_force: Vec2::default(),
    };
    if let Ok(e) = stance_eval(env, foot, pos, s.vel, policy.hip_reference(0.0)) {
        s.contact_force = e.force;
    }
    s
}

/// Runs one policy for `cfg.duration` seconds and scores it.
///
/// The result is a pure function of `(policy, env, cfg)`: actuation noise is
/// drawn from a generator seeded with `cfg.seed`.
pub fn rollout(policy: &PolicyParams, env: &RobotParams, cfg: &RolloutConfig) -> Result<RolloutResult> {
    cfg.validate()?;
    env.validate()?;
    ensure(policy.omega > 0.0 && policy.omega.is_finite(), || "omega must be > 0".into())?;

    let n_steps = (cfg.duration / cfg.dt).round() as usize;
    let settle_steps = (cfg.settle_time / cfg.dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = (env.actuation_noise_sigma > 0.0).then(|| Normal::new(0.0, env.actuation_noise_sigma).expect("sigma > 0"));

    let mut state = initial_state(policy, env);
    let mut trajectory = cfg.record_trajectory.then(|| vec![TrajectorySample::from(&state)]);
    let mut failure = None;
    let mut hop_count = 0;
    let mut peak_height = state.pos.z;
    let mut x_settle = state.pos.x;

    'outer: for k in 0..n_steps {
        let t = k as f64 * cfg.dt;
        let mut reference = policy.hip_reference(t);
        if let Some(n) = &noise {
            reference.angle += n.sample(&mut rng);
        }
        state.t = t;

        let mut remaining = cfg.dt;
        // at most a couple of transitions can fit in one step
        for _ in 0..4 {
            let next = match step(&state, env, reference, remaining) {
                Ok(s) => s,
                Err(kind) => {
                    failure = Some(kind);
                    break 'outer;
                }
            };
            match detect_events(&state, &next, env) {
                None => {
                    state = next;
                    break;
                }
                Some(Event::Failure(kind)) => {
                    failure = Some(kind);
                    state = next;
                    break 'outer;
                }
                Some(event) => {
                    let (tau, mut at_event) = match refine_event(&state, env, reference, remaining, event) {
                        Ok(v) => v,
                        Err(kind) => {
                            failure = Some(kind);
                            break 'outer;
                        }
                    };
                    apply_transition(&mut at_event, env, event);
                    if event == Event::Liftoff {
                        hop_count += 1;
                    }
                    state = at_event;
                    remaining -= tau;
                    if remaining <= EVENT_TIME_TOL * 1e-3 {
                        break;
                    }
                }
            }
        }
        state.t = (k + 1) as f64 * cfg.dt;
        peak_height = peak_height.max(state.pos.z);
        if k + 1 == settle_steps {
            x_settle = state.pos.x;
        }
        if let Some(traj) = trajectory.as_mut() {
            if (k + 1) % cfg.trajectory_sample_stride == 0 {
                traj.push(TrajectorySample::from(&state));
            }
        }
    }

    if let (Some(traj), Some(_)) = (trajectory.as_mut(), failure) {
        traj.push(TrajectorySample::from(&state));
    }
    let window = cfg.duration - cfg.settle_time;
    let displacement = state.pos.x - x_settle;
    let reward = if failure.is_some() { 0.0 } else { (displacement / window).max(0.0) };
    Ok(RolloutResult {
        reward,
        failure,
        failure_time: failure.map(|_| state.t),
        displacement,
        duration: window,
        hop_count,
        peak_height,
        trajectory,
    })
}
