use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::terrain::Terrain;

/// Compliant point-contact parameters (possibly randomized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
}

impl From<&crate::config::ContactConfig> for ContactModel {
    fn from(c: &crate::config::ContactConfig) -> Self {
        ContactModel {
            stiffness: c.stiffness,
            damping: c.damping,
            friction: c.friction,
            tangential_stiffness: c.tangential_stiffness,
            tangential_damping: c.tangential_damping,
        }
    }
}

/// Foot contact bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactState {
    pub in_contact: bool,
    /// Depth below the surface along its normal, m.
    pub penetration: f64,
    pub foot_world: Vector3<f64>,
    /// Normal force magnitude, N.
    pub normal_force: f64,
    /// Tangential spring anchor, set at touchdown and dragged while sliding.
    pub anchor: Option<Vector3<f64>>,
    pub sliding: bool,
}

/// Ground reaction on the foot, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    pub force: Vector3<f64>,
    pub normal_force: f64,
    pub tangential: Vector3<f64>,
    pub penetration: f64,
    pub sliding: bool,
}

impl ContactForce {
    fn none() -> Self {
        ContactForce {
            force: Vector3::zeros(),
            normal_force: 0.0,
            tangential: Vector3::zeros(),
            penetration: 0.0,
            sliding: false,
        }
    }
}

fn tangential_part(v: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    v - n * n.dot(v)
}

impl ContactModel {
    /// Spring-damper reaction on a foot at `foot` moving with `vel`.
    ///
    /// Normal: `max(0, k p + c dp/dt)` where `p` is the depth and `dp/dt`
    /// its rate of increase. Tangential: a spring-damper towards `anchor`
    /// limited to the friction cone; when the limit binds the anchor is
    /// dragged so the spring force equals the cone bound.
    pub fn force(
        &self,
        foot: &Vector3<f64>,
        vel: &Vector3<f64>,
        terrain: &Terrain,
        anchor: &mut Option<Vector3<f64>>,
    ) -> ContactForce {
        let n = terrain.normal();
        let penetration = -terrain.clearance(foot);
        if penetration <= 0.0 {
            *anchor = None;
            return ContactForce::none();
        }
        let depth_rate = -vel.dot(&n);
        let normal_force = (self.stiffness * penetration + self.damping * depth_rate).max(0.0);

        let surface_point = foot + n * penetration;
        let a = *anchor.get_or_insert(surface_point);
        let stretch = tangential_part(&(surface_point - a), &n);
        let demand = -self.tangential_stiffness * stretch - self.tangential_damping * tangential_part(vel, &n);
        let (tangential, sliding) = self.friction_clamp(demand, normal_force);
        if sliding {
            // re-seat the anchor so the spring alone supplies the bound
            *anchor = Some(surface_point + tangential / self.tangential_stiffness);
        }

        ContactForce {
            force: n * normal_force + tangential,
            normal_force,
            tangential,
            penetration,
            sliding,
        }
    }

    /// Projects a tangential demand onto the friction cone `|F_t| <= mu F_n`.
    pub fn friction_clamp(&self, demand: Vector3<f64>, normal_force: f64) -> (Vector3<f64>, bool) {
        let bound = self.friction * normal_force;
        let mag = demand.norm();
        if mag > bound {
            let t = if mag > 0.0 { demand * (bound / mag) } else { demand };
            (t, true)
        } else {
            (demand, false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> ContactModel {
        ContactModel::from(&crate::config::ContactConfig::default())
    }

    #[test]
    fn static_penetration_gives_spring_force() {
        let mut anchor = None;
        let f = model().force(
            &Vector3::new(0.0, 0.0, -0.01),
            &Vector3::zeros(),
            &Terrain::Flat,
            &mut anchor,
        );
        // 5000 N/m * 0.01 m
        assert_relative_eq!(f.normal_force, 50.0, epsilon = 1e-9);
        assert_relative_eq!(f.force, Vector3::new(0.0, 0.0, 50.0), epsilon = 1e-9);
        assert!(anchor.is_some());
    }

    #[test]
    fn no_force_at_a_distance() {
        let mut anchor = Some(Vector3::zeros());
        let f = model().force(
            &Vector3::new(0.0, 0.0, 0.001),
            &Vector3::new(0.0, 0.0, -1.0),
            &Terrain::Flat,
            &mut anchor,
        );
        assert_eq!(f.force, Vector3::zeros());
        assert_eq!(f.normal_force, 0.0);
        assert!(anchor.is_none());
    }

    #[test]
    fn separating_foot_never_pulls() {
        let mut anchor = None;
        let f = model().force(
            &Vector3::new(0.0, 0.0, -0.001),
            &Vector3::new(0.0, 0.0, 5.0),
            &Terrain::Flat,
            &mut anchor,
        );
        assert_eq!(f.normal_force, 0.0);
    }

    #[test]
    fn friction_cone_clamps_sliding_demand() {
        let mut m = model();
        m.friction = 0.8;
        let (t, sliding) = m.friction_clamp(Vector3::new(100.0, 0.0, 0.0), 50.0);
        assert!(sliding);
        assert_relative_eq!(t.norm(), 40.0, epsilon = 1e-12);
        assert_relative_eq!(t, Vector3::new(40.0, 0.0, 0.0), epsilon = 1e-12);

        let (t, sliding) = m.friction_clamp(Vector3::new(10.0, 0.0, 0.0), 50.0);
        assert!(!sliding);
        assert_eq!(t, Vector3::new(10.0, 0.0, 0.0));
    }

    #[test]
    fn displaced_anchor_pulls_foot_back() {
        let m = model();
        let mut anchor = Some(Vector3::new(0.0, 0.0, 0.0));
        let f = m.force(
            &Vector3::new(0.002, 0.0, -0.01),
            &Vector3::zeros(),
            &Terrain::Flat,
            &mut anchor,
        );
        assert!(!f.sliding);
        assert_relative_eq!(f.tangential.x, -10.0, epsilon = 1e-9);
    }
}
