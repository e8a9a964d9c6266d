use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::contact::ContactModel;
use crate::config::HopperConfig;

/// Dynamics and control parameters in effect for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub mass: f64,
    pub inertia: Vector3<f64>,
    pub contact: ContactModel,
    /// Multiplier on both PD laws.
    pub gain_scale: f64,
}

impl DynamicsParams {
    pub fn nominal(cfg: &HopperConfig) -> Self {
        DynamicsParams {
            mass: cfg.sim.body_mass,
            inertia: cfg.body_inertia(),
            contact: ContactModel::from(&cfg.contact),
            gain_scale: 1.0,
        }
    }

    /// Draws mass (inertia scales with it), friction, contact stiffness and
    /// PD gain scale from the configured ranges.
    pub fn randomized<R: Rng + ?Sized>(cfg: &HopperConfig, rng: &mut R) -> Self {
        let r = &cfg.randomization;
        let mut p = Self::nominal(cfg);
        let draw = |rng: &mut R, range: &crate::geometry::Range| {
            if range.width() > 0.0 {
                rng.random_range(range.min..=range.max)
            } else {
                range.min
            }
        };
        let mass_scale = draw(rng, &r.mass_scale);
        p.mass *= mass_scale;
        p.inertia *= mass_scale;
        p.contact.friction = draw(rng, &r.friction);
        p.contact.stiffness *= draw(rng, &r.stiffness_scale);
        p.gain_scale = draw(rng, &r.gain_scale);
        p
    }
}
