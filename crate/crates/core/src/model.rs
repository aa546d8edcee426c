//! Physical constants of the boom-mounted hopping leg and its planar kinematics.
//!
//! The leg is two massless segments: the upper segment hangs from the hip, the
//! lower segment ends in a point foot, and the passive "ankle" joint between
//! them carries a cam-mounted spring that holds it against a 130° extension
//! stop. The body is a point mass held upright by the boom.
//!
//! Angle conventions (all radians internally):
//! - `hip_angle` is the orientation of the hip-to-foot line (the virtual leg),
//!   measured from body-down vertical, positive when the foot is forward (+x).
//! - `ankle_angle` is the interior angle between the two segments; 180° is a
//!   straight leg. The knee always bends backward, behind the virtual leg.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Planar vector in the sagittal plane: `x` forward, `z` up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub z: f64,
}

impl Vec2 {
    pub const fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.z + o.z)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.z * s)
    }
}

const DEFAULT_JSON: &str = include_str!("../data/robot_default.json");

/// All physical constants of the hopper plus the contact and actuator model.
///
/// SI units throughout. The shipped defaults live in `data/robot_default.json`;
/// any subset of fields can be overridden from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// kg
    pub body_mass: f64,
    /// m/s²
    pub gravity: f64,
    /// m
    pub upper_len: f64,
    /// m
    pub lower_len: f64,
    /// Interior angle between the segments at the extension stop, rad.
    pub ankle_rest_angle: f64,
    /// N·m/rad
    pub ankle_stiffness_rot: f64,
    /// Spring torque remaining at the stop, N·m.
    pub ankle_preload_torque: f64,
    /// Viscous friction of the ankle cam, N·m·s/rad.
    pub ankle_damping: f64,
    /// Penalty stiffness of the extension stop, N·m/rad.
    pub hardstop_stiffness: f64,
    /// N·m·s/rad
    pub hardstop_damping: f64,
    /// N·m/rad
    pub hip_kp: f64,
    /// N·m·s/rad
    pub hip_kd: f64,
    /// N·m
    pub hip_torque_max: f64,
    pub hip_angle_min: f64,
    pub hip_angle_max: f64,
    pub ground_level: f64,
    /// Body heights below this count as a crash, m.
    pub min_body_height: f64,
    /// Boom radius, m. Speeds are reported as planar x-speed, which equals
    /// arc speed at this radius.
    pub boom_radius: f64,
    /// Standard deviation of the per-step hip reference noise, rad.
    pub actuation_noise_sigma: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_JSON).expect("shipped robot_default.json is valid")
    }
}

/// The raw JSON of the shipped default parameter set.
pub fn default_params_json() -> &'static str {
    DEFAULT_JSON
}

/// Leg points produced by [`RobotParams::forward_kinematics`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegPose {
    pub knee: Vec2,
    pub foot: Vec2,
}

/// Joint angles produced by [`RobotParams::inverse_kinematics`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointAngles {
    pub hip: f64,
    pub ankle: f64,
}

/// Converts the linear ankle spring acting on the cam into a rotational stiffness.
pub fn ankle_rotational_stiffness(linear_stiffness: f64, cam_radius: f64) -> Result<f64> {
    ensure(linear_stiffness > 0.0 && linear_stiffness.is_finite(), || {
        format!("linear_stiffness must be > 0, got {linear_stiffness}")
    })?;
    ensure(cam_radius > 0.0 && cam_radius.is_finite(), || {
        format!("cam_radius must be > 0, got {cam_radius}")
    })?;
    Ok(linear_stiffness * cam_radius * cam_radius)
}

impl RobotParams {
    /// Parses a JSON document of overrides on top of the shipped defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let overrides: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        Self::with_overrides(&overrides)
    }

    /// Applies field overrides to the shipped defaults. Unknown keys are rejected.
    pub fn with_overrides(overrides: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        let mut merged: serde_json::Map<String, serde_json::Value> = serde_json::from_str(DEFAULT_JSON)?;
        for (k, v) in overrides {
            if !merged.contains_key(k) {
                return Err(Error::Parameter(format!("unknown robot parameter `{k}`")));
            }
            merged.insert(k.clone(), v.clone());
        }
        let p: RobotParams = serde_json::from_value(serde_json::Value::Object(merged))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("body_mass", self.body_mass),
            ("gravity", self.gravity),
            ("upper_len", self.upper_len),
            ("lower_len", self.lower_len),
            ("ankle_rest_angle", self.ankle_rest_angle),
            ("ankle_stiffness_rot", self.ankle_stiffness_rot),
            ("hardstop_stiffness", self.hardstop_stiffness),
            ("hip_torque_max", self.hip_torque_max),
            ("boom_radius", self.boom_radius),
        ];
        for (name, v) in positive {
            ensure(v > 0.0 && v.is_finite(), || format!("{name} must be > 0, got {v}"))?;
        }
        let non_negative = [
            ("ankle_preload_torque", self.ankle_preload_torque),
            ("ankle_damping", self.ankle_damping),
            ("hardstop_damping", self.hardstop_damping),
            ("hip_kp", self.hip_kp),
            ("hip_kd", self.hip_kd),
            ("min_body_height", self.min_body_height),
            ("actuation_noise_sigma", self.actuation_noise_sigma),
        ];
        for (name, v) in non_negative {
            ensure(v >= 0.0 && v.is_finite(), || format!("{name} must be >= 0, got {v}"))?;
        }
        ensure(self.hip_kd > 0.0, || "hip_kd must be > 0 (it sets the flight slew limit)".into())?;
        ensure(self.ankle_rest_angle < std::f64::consts::PI, || {
            "ankle_rest_angle must be below 180°".into()
        })?;
        ensure(self.hip_angle_min < self.hip_angle_max, || {
            "hip_angle_min must be below hip_angle_max".into()
        })?;
        ensure(self.ground_level.is_finite(), || "ground_level must be finite".into())?;
        Ok(())
    }

    /// Hip-to-foot distance for a given interior ankle angle (law of cosines).
    pub fn virtual_leg_length(&self, ankle_angle: f64) -> f64 {
        let (a, b) = (self.upper_len, self.lower_len);
        (a * a + b * b - 2.0 * a * b * ankle_angle.cos()).max(0.0).sqrt()
    }

    /// d(virtual leg length)/d(ankle angle).
    pub fn virtual_leg_length_rate(&self, ankle_angle: f64) -> f64 {
        self.upper_len * self.lower_len * ankle_angle.sin() / self.virtual_leg_length(ankle_angle)
    }

    pub fn rest_leg_length(&self) -> f64 {
        self.virtual_leg_length(self.ankle_rest_angle)
    }

    /// Largest hip angular rate the motor reaches in flight. With a massless
    /// leg the saturated PD torque is balanced by its own damping term.
    pub fn hip_slew_limit(&self) -> f64 {
        self.hip_torque_max / self.hip_kd
    }

    pub fn forward_kinematics(&self, body: Vec2, hip_angle: f64, ankle_angle: f64) -> LegPose {
        let d = self.virtual_leg_length(ankle_angle);
        let foot = body + Vec2::new(hip_angle.sin(), -hip_angle.cos()) * d;
        // angle at the hip between the upper segment and the virtual leg
        let cos_beta = if d > 0.0 {
            ((self.upper_len.powi(2) + d * d - self.lower_len.powi(2)) / (2.0 * self.upper_len * d))
                .clamp(-1.0, 1.0)
        } else {
            1.0
        };
        let upper = hip_angle - cos_beta.acos();
        let knee = body + Vec2::new(upper.sin(), -upper.cos()) * self.upper_len;
        LegPose { knee, foot }
    }

    pub fn inverse_kinematics(&self, body: Vec2, foot: Vec2) -> Result<JointAngles> {
        let r = foot - body;
        let distance = r.norm();
        let (a, b) = (self.upper_len, self.lower_len);
        let (min, max) = ((a - b).abs(), a + b);
        if !(distance > min && distance < max) {
            return Err(Error::Kinematic { distance, min, max });
        }
        let cos_ankle = ((a * a + b * b - distance * distance) / (2.0 * a * b)).clamp(-1.0, 1.0);
        Ok(JointAngles {
            hip: r.x.atan2(-r.z),
            ankle: cos_ankle.acos(),
        })
    }

    /// Jacobian of body position with respect to (ankle, hip) with the foot
    /// pinned. Columns are ∂body/∂ankle and ∂body/∂hip; rows are (x, z).
    pub fn stance_jacobian(&self, hip_angle: f64, ankle_angle: f64) -> Result<[[f64; 2]; 2]> {
        let j = self.stance_jacobian_unchecked(hip_angle, ankle_angle);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det.abs() >= 1e-9) {
            return Err(Error::Singular { det });
        }
        Ok(j)
    }

    pub(crate) fn stance_jacobian_unchecked(&self, hip_angle: f64, ankle_angle: f64) -> [[f64; 2]; 2] {
        let d = self.virtual_leg_length(ankle_angle);
        let dd = self.virtual_leg_length_rate(ankle_angle);
        let (s, c) = hip_angle.sin_cos();
        // body = foot + d(ankle) * (-sin hip, cos hip)
        [[-dd * s, -d * c], [dd * c, -d * s]]
    }
}
