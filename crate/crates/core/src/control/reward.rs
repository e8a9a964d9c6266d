use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Command, PhaseClock};
use crate::config::RewardConfig;
use crate::conversion::{JointTorques, Serial};
use crate::geometry::Range;
use crate::sim::SimState;

/// Reward terms of one control step. `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tracking: f64,
    pub phase: f64,
    pub upright: f64,
    pub action_rate: f64,
    pub torque: f64,
    pub total: f64,
}

/// 1 when the contact state agrees with the clock's stance/swing schedule.
pub fn phase_match(in_contact: bool, clock: &PhaseClock) -> f64 {
    let stance = clock.in_stance();
    if in_contact == stance {
        1.0
    } else {
        0.0
    }
}

pub fn reward(
    cfg: &RewardConfig,
    state: &SimState,
    clock: &PhaseClock,
    command: &Command,
    action: &Vector3<f64>,
    prev_action: &Vector3<f64>,
    tau: &JointTorques<Serial>,
) -> RewardBreakdown {
    let v = state.body.heading_velocity();
    let err = Vector2::new(v.x, v.y) - command.v_d;
    let rpy = state.body.rpy();
    let tracking = cfg.tracking_weight * (-err.norm_squared() / cfg.tracking_sigma.powi(2)).exp();
    let phase = cfg.phase_weight * phase_match(state.contact.in_contact, clock);
    let upright = cfg.upright_weight * (-(rpy.x * rpy.x + rpy.y * rpy.y) / cfg.upright_sigma.powi(2)).exp();
    let action_rate = -cfg.action_rate_weight * (action - prev_action).norm_squared();
    let torque = -cfg.torque_weight * tau.tau.norm_squared();
    RewardBreakdown {
        tracking,
        phase,
        upright,
        action_rate,
        torque,
        total: tracking + phase + upright + action_rate + torque,
    }
}

/// Largest attainable reward.
pub fn reward_upper_bound(cfg: &RewardConfig) -> f64 {
    cfg.tracking_weight + cfg.phase_weight + cfg.upright_weight
}

/// Smallest attainable reward when actions stay in `action_range` and the
/// template efforts within `effort_max`.
pub fn reward_lower_bound(cfg: &RewardConfig, action_range: &Range, effort_max: &Vector3<f64>) -> f64 {
    -cfg.action_rate_weight * 3.0 * action_range.width().powi(2) - cfg.torque_weight * effort_max.norm_squared()
}
