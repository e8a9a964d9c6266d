//! Kinematics of the 3-RSR parallel leg and of its serial template model.
//!
//! Both models describe the foot position in the body-fixed base frame
//! (x forward, y left, z up, origin at the hip plane centre). The parallel
//! leg is driven by three hip motors; the template model replaces them with
//! a roll joint, a pitch joint and a prismatic extension.

mod parallel;
mod serial;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use parallel::{ChainGeometry, WORKSPACE_MARGIN};
pub use serial::{fk_serial, ik_serial, jacobian_serial};

/// Jacobian of a foot-position map: rows are foot coordinates, columns joints.
pub type JacobianMatrix = Matrix3<f64>;

/// Foot position in the body-fixed base frame, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPosition(pub Vector3<f64>);

impl FootPosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        FootPosition(Vector3::new(x, y, z))
    }
}

impl From<Vector3<f64>> for FootPosition {
    fn from(v: Vector3<f64>) -> Self {
        FootPosition(v)
    }
}

/// Hip motor angles and rates of the parallel leg.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParallelJointState {
    /// Motor angles, rad.
    pub q: Vector3<f64>,
    /// Motor rates, rad/s.
    pub qd: Vector3<f64>,
}

impl ParallelJointState {
    pub fn at_rest(q: Vector3<f64>) -> Self {
        ParallelJointState {
            q,
            qd: Vector3::zeros(),
        }
    }
}

/// Joint coordinates of the template model: `(roll rad, pitch rad, ext m)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SerialJointState {
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
}

impl SerialJointState {
    pub fn at_rest(q: Vector3<f64>) -> Self {
        SerialJointState {
            q,
            qd: Vector3::zeros(),
        }
    }

    pub fn roll(&self) -> f64 {
        self.q.x
    }

    pub fn pitch(&self) -> f64 {
        self.q.y
    }

    pub fn ext(&self) -> f64 {
        self.q.z
    }
}

/// Closed interval used for joint limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Joint limits of the parallel motors (shared by all three chains).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelLimits {
    pub q: Range,
}

impl Default for ParallelLimits {
    fn default() -> Self {
        ParallelLimits {
            q: Range::new(-1.3, 1.3),
        }
    }
}

impl ParallelLimits {
    pub fn contains(&self, q: &Vector3<f64>) -> bool {
        q.iter().all(|&v| self.q.contains(v))
    }

    pub fn clamp(&self, q: &Vector3<f64>) -> Vector3<f64> {
        q.map(|v| self.q.clamp(v))
    }
}

/// Joint limits of the template model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerialLimits {
    pub roll: Range,
    pub pitch: Range,
    pub ext: Range,
}

impl Default for SerialLimits {
    fn default() -> Self {
        SerialLimits {
            roll: Range::new(-0.8, 0.8),
            pitch: Range::new(-0.8, 0.8),
            ext: Range::new(0.12, 0.40),
        }
    }
}

impl SerialLimits {
    pub fn range(&self, joint: usize) -> Range {
        match joint {
            0 => self.roll,
            1 => self.pitch,
            _ => self.ext,
        }
    }

    pub fn contains(&self, q: &Vector3<f64>) -> bool {
        (0..3).all(|j| self.range(j).contains(q[j]))
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn serial_limits_reject_out_of_range_extension() {
        let lim = SerialLimits::default();
        assert!(lim.contains(&Vector3::new(0.0, 0.0, 0.2)));
        assert!(!lim.contains(&Vector3::new(0.0, 0.0, 0.45)));
        assert!(!lim.contains(&Vector3::new(0.9, 0.0, 0.2)));
    }
}
