//! Control stack for a single-legged hopping robot with a 3-RSR parallel leg.
//!
//! The crate covers closed-form kinematics of the parallel leg and of a
//! serial template model, the torque-level conversion between the two, a
//! fixed-step hopping simulator built on the template model, gait
//! scheduling / rewards / controllers, and the episode runner and rollout
//! server used by external trainers.

pub mod error;
pub mod geometry;

pub use error::{ConfigError, Error, KinematicsError, PolicyError, Result, SimError};
pub mod config;
pub mod conversion;
pub mod sim;

pub use config::HopperConfig;
pub mod control;
pub mod rollout;
