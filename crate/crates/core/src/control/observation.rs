use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::PhaseClock;
use crate::conversion::serial_to_parallel_state;
use crate::error::{ConfigError, KinematicsError};
use crate::geometry::{wrap_angle, ChainGeometry};
use crate::sim::SimState;

/// Observation length.
pub const OBS_DIM: usize = 17;

/// Largest commanded speed, m/s.
pub const MAX_COMMAND_SPEED: f64 = 0.6;
/// Accepted gait periods, s.
pub const PERIOD_RANGE: (f64, f64) = (0.3, 0.5);

/// Desired horizontal velocity (heading frame) and gait period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub v_d: Vector2<f64>,
    pub period: f64,
}

impl Default for Command {
    fn default() -> Self {
        Command {
            v_d: Vector2::zeros(),
            period: 0.4,
        }
    }
}

impl Command {
    pub fn new(vx: f64, vy: f64, period: f64) -> Result<Self, ConfigError> {
        let c = Command {
            v_d: Vector2::new(vx, vy),
            period,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.v_d.iter().all(|v| v.is_finite()) && self.v_d.norm() <= MAX_COMMAND_SPEED + 1e-12) {
            return Err(ConfigError::invalid(
                "command.v_d",
                format!("speed must be at most {MAX_COMMAND_SPEED} m/s"),
            ));
        }
        if !(self.period >= PERIOD_RANGE.0 && self.period <= PERIOD_RANGE.1) {
            return Err(ConfigError::invalid(
                "command.period",
                format!("must lie in [{}, {}] s", PERIOD_RANGE.0, PERIOD_RANGE.1),
            ));
        }
        Ok(())
    }
}

/// Policy input, in the fixed order
/// `q_P(3) rpy(3) omega(3) cos(phi) sin(phi) v_d(2) T prev_action(3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub const MOTOR_Q: std::ops::Range<usize> = 0..3;
    pub const RPY: std::ops::Range<usize> = 3..6;
    pub const ANG_VEL: std::ops::Range<usize> = 6..9;
    pub const PHASE: std::ops::Range<usize> = 9..11;
    pub const COMMAND: std::ops::Range<usize> = 11..13;
    pub const PERIOD: usize = 13;
    pub const PREV_ACTION: std::ops::Range<usize> = 14..17;

    pub fn zeros() -> Self {
        Observation([0.0; OBS_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn motor_q(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.0[Self::MOTOR_Q])
    }

    pub fn prev_action(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.0[Self::PREV_ACTION])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Assembles the observation. Motor angles come from the template state
/// through the parallel inverse kinematics.
pub fn build_observation(
    geom: &ChainGeometry,
    state: &SimState,
    clock: &PhaseClock,
    command: &Command,
    prev_action: &Vector3<f64>,
) -> Result<Observation, KinematicsError> {
    let motor = serial_to_parallel_state(geom, &state.leg)?;
    let rpy = state.body.rpy();
    let w = state.body.ang_vel;
    let (c, s) = clock.features();
    let mut o = [0.0; OBS_DIM];
    for i in 0..3 {
        o[i] = wrap_angle(motor.q[i]);
        o[3 + i] = wrap_angle(rpy[i]);
        o[6 + i] = w[i];
        o[14 + i] = prev_action[i];
    }
    o[9] = c;
    o[10] = s;
    o[11] = command.v_d.x;
    o[12] = command.v_d.y;
    o[13] = clock.period();
    Ok(Observation(o))
}
