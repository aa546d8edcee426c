//! Open-loop sinusoidal hip policy and its bounded parameter space.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Default hip oscillation frequency: 9 Hz, expressed in rad/s.
pub const DEFAULT_OMEGA: f64 = 2.0 * std::f64::consts::PI * 9.0;

/// Hip reference `theta0 + theta1 * sin(omega * t)`.
///
/// Offset and amplitude are in degrees (the user-facing unit); the frequency
/// is in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    #[serde(rename = "theta0_deg")]
    pub theta0: f64,
    #[serde(rename = "theta1_deg")]
    pub theta1: f64,
    #[serde(rename = "omega_rad_s", default = "default_omega")]
    pub omega: f64,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HipReference {
    /// rad
    pub angle: f64,
    /// rad/s
    pub rate: f64,
}

impl PolicyParams {
    pub fn new(theta0: f64, theta1: f64) -> Self {
        Self { theta0, theta1, omega: DEFAULT_OMEGA }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    /// Parses the `t0,t1` form accepted on the command line.
    pub fn parse_pair(text: &str) -> Result<Self> {
        let mut it = text.split(',').map(|s| s.trim().parse::<f64>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(t0)), Some(Ok(t1)), None) if t0.is_finite() && t1.is_finite() => Ok(Self::new(t0, t1)),
            _ => Err(Error::Parameter(format!("expected `theta0,theta1` in degrees, got `{text}`"))),
        }
    }

    pub fn hip_reference(&self, t: f64) -> HipReference {
        let (s, c) = (self.omega * t).sin_cos();
        HipReference {
            angle: (self.theta0 + self.theta1 * s).to_radians(),
            rate: (self.theta1 * self.omega * c).to_radians(),
        }
    }

    pub fn validate(&self, bounds: &ParameterBox) -> Result<()> {
        ensure(self.omega > 0.0 && self.omega.is_finite(), || format!("omega must be > 0, got {}", self.omega))?;
        ensure(bounds.contains(self), || {
            format!(
                "policy ({}, {}) deg outside box [{}, {}] x [{}, {}]",
                self.theta0, self.theta1, bounds.theta0_min, bounds.theta0_max, bounds.theta1_min, bounds.theta1_max
            )
        })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.theta0, self.theta1]
    }
}

/// Rectangle of admissible (offset, amplitude) pairs, degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterBox {
    pub theta0_min: f64,
    pub theta0_max: f64,
    pub theta1_min: f64,
    pub theta1_max: f64,
}

impl Default for ParameterBox {
    fn default() -> Self {
        Self { theta0_min: 0.0, theta0_max: 40.0, theta1_min: 10.0, theta1_max: 45.0 }
    }
}

impl ParameterBox {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.theta0_min, self.theta0_max, self.theta1_min, self.theta1_max]
            .iter()
            .all(|v| v.is_finite());
        ensure(finite && self.theta0_min < self.theta0_max && self.theta1_min < self.theta1_max, || {
            format!("parameter box needs min < max on both axes: {self:?}")
        })
    }

    pub fn contains(&self, p: &PolicyParams) -> bool {
        (self.theta0_min..=self.theta0_max).contains(&p.theta0) && (self.theta1_min..=self.theta1_max).contains(&p.theta1)
    }

    pub fn area(&self) -> f64 {
        (self.theta0_max - self.theta0_min) * (self.theta1_max - self.theta1_min)
    }

    pub fn width(&self) -> f64 {
        self.theta0_max - self.theta0_min
    }

    pub fn height(&self) -> f64 {
        self.theta1_max - self.theta1_min
    }
}

/// Componentwise clamp of (theta0, theta1) into the box; omega is untouched.
pub fn clip_to_box(p: PolicyParams, bounds: &ParameterBox) -> PolicyParams {
    PolicyParams {
        theta0: p.theta0.clamp(bounds.theta0_min, bounds.theta0_max),
        theta1: p.theta1.clamp(bounds.theta1_min, bounds.theta1_max),
        omega: p.omega,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn reference_at_zero_and_quarter_period() {
        let p = PolicyParams::new(12.0, 30.0);
        assert_abs_diff_eq!(p.hip_reference(0.0).angle, 12f64.to_radians(), epsilon = 1e-15);
        let quarter = PI / (2.0 * p.omega);
        assert_abs_diff_eq!(p.hip_reference(quarter).angle, 42f64.to_radians(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.hip_reference(quarter).rate, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.hip_reference(0.0).rate, (30.0 * p.omega).to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn nine_hertz_quarter_cycle() {
        let p = PolicyParams::new(10.0, 20.0).with_omega(2.0 * PI * 9.0);
        assert_abs_diff_eq!(p.hip_reference(1.0 / 36.0).angle.to_degrees(), 30.0, epsilon = 1e-9);
    }

    #[test]
    fn clipping() {
        let b = ParameterBox::default();
        assert_eq!(clip_to_box(PolicyParams::new(20.0, 30.0), &b).as_array(), [20.0, 30.0]);
        assert_eq!(clip_to_box(PolicyParams::new(44.0, 49.0), &b).as_array(), [40.0, 45.0]);
        assert_eq!(clip_to_box(PolicyParams::new(-5.0, 9.0), &b).as_array(), [0.0, 10.0]);
        let w = PolicyParams::new(-5.0, 9.0).with_omega(3.0);
        assert_eq!(clip_to_box(w, &b).omega, 3.0);
    }

    #[test]
    fn parse_pair_and_json() {
        let p = PolicyParams::parse_pair("22.5,32.6").unwrap();
        assert_eq!(p.as_array(), [22.5, 32.6]);
        assert!(PolicyParams::parse_pair("22.5").is_err());
        assert!(PolicyParams::parse_pair("a,b").is_err());
        assert!(PolicyParams::parse_pair("1,2,3").is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"theta0_deg\":22.5") && json.contains("omega_rad_s"));
        let back: PolicyParams = serde_json::from_str(r#"{"theta0_deg": 1, "theta1_deg": 20}"#).unwrap();
        assert_eq!(back.omega, DEFAULT_OMEGA);
    }

    #[test]
    fn box_validation() {
        assert!(ParameterBox::default().validate().is_ok());
        let bad = ParameterBox { theta0_min: 5.0, theta0_max: 5.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(PolicyParams::new(50.0, 20.0).validate(&ParameterBox::default()).is_err());
        assert!(PolicyParams::new(0.0, 10.0).validate(&ParameterBox::default()).is_ok());
    }

    proptest! {
        #[test]
        fn reference_is_periodic(t0 in 0.0..40.0f64, t1 in 10.0..45.0f64, omega in 1.0..100.0f64, t in 0.0..2.0f64) {
            let p = PolicyParams::new(t0, t1).with_omega(omega);
            let period = 2.0 * PI / omega;
            let a = p.hip_reference(t).angle;
            let b = p.hip_reference(t + period).angle;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn clipping_is_idempotent_and_lands_inside(t0 in -100.0..100.0f64, t1 in -100.0..100.0f64) {
            let b = ParameterBox::default();
            let once = clip_to_box(PolicyParams::new(t0, t1), &b);
            prop_assert_eq!(clip_to_box(once, &b), once);
            prop_assert!(once.validate(&b).is_ok());
        }
    }
}
