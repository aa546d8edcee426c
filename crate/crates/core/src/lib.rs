//! Simulation and learning harness for a boom-mounted hopping leg trained
//! with mass-reduced "training wheel" environments.
//!
//! - [`model`]: physical constants and leg kinematics
//! - [`sim`]: hybrid flight/stance dynamics and rollouts
//! - [`policy`]: the sinusoidal hip policy and its parameter box
//! - [`landscape`]: reward-landscape mapping, salient gradient sets, funnels
//! - [`learner`]: finite-difference gradient ascent
//! - [`curriculum`]: learning across a sequence of environments
//! - [`io`]: CSV, JSON and SVG outputs

pub mod curriculum;
pub mod error;
pub mod io;
pub mod landscape;
pub mod learner;
pub mod model;
pub mod policy;
pub mod seed;
pub mod sim;

pub use curriculum::{criteria_report, run_curriculum, CurriculumSpec, PolicyMemory};
pub use error::{Error, Result};
pub use landscape::{extract_sgs, funnel_check, map_landscape, FunnelReport, LandscapeGrid, SgsSummary};
pub use learner::{estimate_gradient, learn_step, run_learning, LearnerConfig, LearningTrace};
pub use model::{ankle_rotational_stiffness, RobotParams, Vec2};
pub use policy::{clip_to_box, ParameterBox, PolicyParams};
pub use sim::{make_environment, rollout, EnvLevel, FailureKind, RolloutConfig, RolloutResult};
