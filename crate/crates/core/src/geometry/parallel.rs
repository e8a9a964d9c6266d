use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{wrap_angle, FootPosition, JacobianMatrix, ParallelJointState, ParallelLimits};
use crate::error::{ConfigError, KinematicsError};

/// `|det A|` below this (relative to the knee spread) means the knee
/// projections are collinear and the foot height cannot be separated.
const FK_SINGULAR_REL: f64 = 1e-12;
/// Tolerance on the acos argument before a target is declared unreachable.
const ACOS_SLACK: f64 = 1e-12;
/// Sine of the angle between lower link and knee tangent below which the
/// inverse-kinematics derivative is treated as divergent.
const STRETCH_SINGULAR: f64 = 1e-6;
/// Singularity threshold on `det(dIK/dx)`.
const IK_DET_SINGULAR: f64 = 1e-10;
/// Minimum knee margin of a configuration considered inside the workspace.
pub const WORKSPACE_MARGIN: f64 = 0.1;

/// Physical constants of the 3-RSR leg.
///
/// Chain `i` (0-based here) lives in a frame rotated about the body z axis by
/// `2*pi*i/3`. In that frame the hip motor axis is parallel to x at
/// `[0, r, 0]` and the knee sits at `[0, r + D cos q, D sin q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryParams", into = "GeometryParams")]
pub struct ChainGeometry {
    hip_radius: f64,
    upper_link: f64,
    lower_link: f64,
    rotations: [Rotation3<f64>; 3],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GeometryParams {
    r: f64,
    upper: f64,
    lower: f64,
}

impl TryFrom<GeometryParams> for ChainGeometry {
    type Error = ConfigError;
    fn try_from(p: GeometryParams) -> Result<Self, ConfigError> {
        ChainGeometry::new(p.r, p.upper, p.lower)
    }
}

impl From<ChainGeometry> for GeometryParams {
    fn from(g: ChainGeometry) -> Self {
        GeometryParams {
            r: g.hip_radius,
            upper: g.upper_link,
            lower: g.lower_link,
        }
    }
}

impl Default for ChainGeometry {
    fn default() -> Self {
        ChainGeometry::new(0.06, 0.14, 0.30).expect("default geometry is valid")
    }
}

impl ChainGeometry {
    /// Yaw of each chain frame about the body z axis.
    pub const CHAIN_YAW: [f64; 3] = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];

    /// `hip_radius` is `r`, `upper_link` is `D`, `lower_link` is `d`.
    pub fn new(hip_radius: f64, upper_link: f64, lower_link: f64) -> Result<Self, ConfigError> {
        for (key, v) in [
            ("geometry.r", hip_radius),
            ("geometry.upper", upper_link),
            ("geometry.lower", lower_link),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(key, format!("must be > 0, got {v}")));
            }
        }
        if lower_link <= hip_radius {
            return Err(ConfigError::invalid(
                "geometry.lower",
                format!("lower link d={lower_link} must exceed hip radius r={hip_radius}"),
            ));
        }
        if lower_link <= hip_radius + upper_link {
            return Err(ConfigError::invalid(
                "geometry.lower",
                "lower link must be longer than r + D so the symmetric pose is reachable",
            ));
        }
        let rotations = Self::CHAIN_YAW.map(|yaw| Rotation3::from_axis_angle(&Vector3::z_axis(), yaw));
        Ok(ChainGeometry {
            hip_radius,
            upper_link,
            lower_link,
            rotations,
        })
    }

    pub fn hip_radius(&self) -> f64 {
        self.hip_radius
    }

    pub fn upper_link(&self) -> f64 {
        self.upper_link
    }

    pub fn lower_link(&self) -> f64 {
        self.lower_link
    }

    pub fn chain_rotation(&self, chain: usize) -> &Rotation3<f64> {
        &self.rotations[chain]
    }

    /// Knee of `chain` (0, 1 or 2) in the base frame for motor angle `q`.
    pub fn knee_position(&self, chain: usize, q: f64) -> Vector3<f64> {
        let local = Vector3::new(
            0.0,
            self.hip_radius + self.upper_link * q.cos(),
            self.upper_link * q.sin(),
        );
        self.rotations[chain] * local
    }

    /// Derivative of [`knee_position`](Self::knee_position) with respect to `q`.
    fn knee_tangent(&self, chain: usize, q: f64) -> Vector3<f64> {
        let local = Vector3::new(0.0, -self.upper_link * q.sin(), self.upper_link * q.cos());
        self.rotations[chain] * local
    }

    /// Foot height of the symmetric pose `q = [0, 0, 0]`.
    pub fn symmetric_foot_height(&self) -> f64 {
        let spread = self.hip_radius + self.upper_link;
        -(self.lower_link * self.lower_link - spread * spread).sqrt()
    }

    /// Forward kinematics.
    ///
    /// Equal knee distances give two linear equations that pin the foot's
    /// `(x, y)` as an affine function of its height `u`; `|x - k1| = d` then
    /// leaves a quadratic in `u`, of which the lower root (foot below the
    /// base) is taken.
    pub fn fk_parallel(&self, q: &Vector3<f64>) -> Result<FootPosition, KinematicsError> {
        let k = [0, 1, 2].map(|i| self.knee_position(i, q[i]));
        let (k1, k2, k3) = (&k[0], &k[1], &k[2]);

        let a = Matrix2::new(
            2.0 * (k1.x - k2.x),
            2.0 * (k1.y - k2.y),
            2.0 * (k3.x - k2.x),
            2.0 * (k3.y - k2.y),
        );
        let b = Vector2::new(
            k1.norm_squared() - k2.norm_squared(),
            k3.norm_squared() - k2.norm_squared(),
        );
        let c = Vector2::new(-2.0 * (k1.z - k2.z), -2.0 * (k3.z - k2.z));

        let scale = a.abs().max().max(f64::MIN_POSITIVE);
        if a.determinant().abs() <= FK_SINGULAR_REL * scale * scale {
            return Err(KinematicsError::Singular);
        }
        let a_inv = a.try_inverse().ok_or(KinematicsError::Singular)?;
        let e = a_inv * b;
        let f = a_inv * c;

        // |[e + u f, u] - k1|^2 = d^2
        let w = e - k1.xy();
        let qa = f.norm_squared() + 1.0;
        let qb = 2.0 * (w.dot(&f) - k1.z);
        let qc = w.norm_squared() + k1.z * k1.z - self.lower_link * self.lower_link;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc.is_nan() || disc < 0.0 {
            return Err(KinematicsError::Unreachable);
        }
        let s = disc.sqrt();
        // cancellation-free pair of roots
        let t = -0.5 * (qb + qb.signum() * s);
        let (r1, r2) = if t != 0.0 { (t / qa, qc / t) } else { (0.0, 0.0) };
        let u = r1.min(r2);

        let xy = e + f * u;
        Ok(FootPosition(Vector3::new(xy.x, xy.y, u)))
    }

    /// Foot relative to the hip of `chain`, expressed in that chain's frame.
    fn chain_local(&self, chain: usize, x: &Vector3<f64>) -> Vector3<f64> {
        let mut p = self.rotations[chain].inverse() * x;
        p.y -= self.hip_radius;
        p
    }

    /// Inverse kinematics of a single chain (knee-out branch).
    pub fn ik_chain(&self, chain: usize, x: &Vector3<f64>) -> Result<f64, KinematicsError> {
        let p = self.chain_local(chain, x);
        let rho = p.y.hypot(p.z);
        if rho <= f64::EPSILON * self.hip_radius {
            return Err(KinematicsError::Degenerate);
        }
        let (dd, ll) = (self.upper_link, self.lower_link);
        let arg = (p.norm_squared() + dd * dd - ll * ll) / (2.0 * dd * rho);
        if !arg.is_finite() || arg.abs() > 1.0 + ACOS_SLACK {
            return Err(KinematicsError::Unreachable);
        }
        let alpha = p.z.atan2(p.y);
        Ok(wrap_angle(alpha + arg.clamp(-1.0, 1.0).acos()))
    }

    /// Inverse kinematics of all three chains.
    pub fn ik_parallel(&self, x: &FootPosition) -> Result<Vector3<f64>, KinematicsError> {
        let mut q = Vector3::zeros();
        for i in 0..3 {
            q[i] = self.ik_chain(i, &x.0)?;
        }
        Ok(q)
    }

    /// Analytic `dIK/dx` at foot `x` with motor angles `q`.
    ///
    /// Each chain satisfies `g_i = |x - k_i(q_i)|^2 - d^2 = 0`; implicit
    /// differentiation gives row `i` as `-(dg_i/dx) / (dg_i/dq_i)`.
    pub fn ik_derivative(&self, x: &Vector3<f64>, q: &Vector3<f64>) -> Result<Matrix3<f64>, KinematicsError> {
        let mut m = Matrix3::zeros();
        let norm = 2.0 * self.lower_link * self.upper_link;
        for i in 0..3 {
            let link = x - self.knee_position(i, q[i]);
            let dg_dq = -2.0 * link.dot(&self.knee_tangent(i, q[i]));
            if dg_dq.abs() < STRETCH_SINGULAR * norm {
                return Err(KinematicsError::Singular);
            }
            let row = link * (-2.0 / dg_dq);
            m.set_row(i, &row.transpose());
        }
        Ok(m)
    }

    /// Jacobian `dx/dq` of the parallel leg, obtained by inverting `dIK/dx`
    /// at the foot produced by `q`.
    pub fn jacobian_parallel(&self, q: &Vector3<f64>) -> Result<JacobianMatrix, KinematicsError> {
        let x = self.fk_parallel(q)?;
        let d_ik = self.ik_derivative(&x.0, q)?;
        if d_ik.determinant().abs() < IK_DET_SINGULAR {
            return Err(KinematicsError::Singular);
        }
        d_ik.try_inverse().ok_or(KinematicsError::Singular)
    }

    /// Smallest `sin(q_i - alpha_i)` over the chains at configuration `q`.
    ///
    /// Positive values mean every knee is on the knee-out branch that
    /// [`ik_parallel`](Self::ik_parallel) returns; values near zero mean a
    /// chain is close to fully stretched or folded.
    pub fn knee_margin(&self, q: &Vector3<f64>) -> Result<f64, KinematicsError> {
        let x = self.fk_parallel(q)?;
        let mut margin = f64::INFINITY;
        for i in 0..3 {
            let p = self.chain_local(i, &x.0);
            let rho = p.y.hypot(p.z);
            if rho <= f64::EPSILON {
                return Err(KinematicsError::Degenerate);
            }
            let (s, c) = q[i].sin_cos();
            margin = margin.min((p.y * s - p.z * c) / rho);
        }
        Ok(margin)
    }

    /// Whether `q` lies inside the limits and well inside the knee-out
    /// workspace (margin at least [`WORKSPACE_MARGIN`]).
    pub fn in_workspace(&self, q: &Vector3<f64>, limits: &ParallelLimits) -> bool {
        limits.contains(q) && self.knee_margin(q).is_ok_and(|m| m >= WORKSPACE_MARGIN)
    }

    /// Convenience wrapper: foot velocity of a parallel joint state.
    pub fn foot_velocity(&self, s: &ParallelJointState) -> Result<Vector3<f64>, KinematicsError> {
        Ok(self.jacobian_parallel(&s.q)? * s.qd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom() -> ChainGeometry {
        ChainGeometry::default()
    }

    #[test]
    fn knee_position_reference_values() {
        let g = geom();
        assert_relative_eq!(g.knee_position(0, 0.0), Vector3::new(0.0, 0.20, 0.0), epsilon = 1e-15);
        assert_relative_eq!(
            g.knee_position(0, PI / 2.0),
            Vector3::new(0.0, 0.06, 0.14),
            epsilon = 1e-15
        );
        // Rz(2pi/3) [0, 0.2, 0] = [-0.2 sin 120deg, 0.2 cos 120deg, 0]
        let expected = Vector3::new(-0.2 * (2.0 * PI / 3.0).sin(), 0.2 * (2.0 * PI / 3.0).cos(), 0.0);
        assert_relative_eq!(g.knee_position(1, 0.0), expected, epsilon = 1e-15);
        assert_relative_eq!(
            g.knee_position(1, 0.0),
            Vector3::new(-0.17321, -0.10, 0.0),
            epsilon = 1e-5
        );
    }

    #[test]
    fn symmetric_pose_hangs_on_the_axis() {
        let g = geom();
        let x = g.fk_parallel(&Vector3::zeros()).unwrap();
        let expected_z = -(0.30f64.powi(2) - 0.20f64.powi(2)).sqrt();
        assert_relative_eq!(x.0.z, expected_z, epsilon = 1e-14);
        assert_relative_eq!(x.0.z, -0.22361, epsilon = 1e-5);
        assert!(x.0.x.abs() < 1e-12 && x.0.y.abs() < 1e-12);

        let q = g.ik_parallel(&x).unwrap();
        assert!(q.amax() < 1e-12, "{q}");
    }

    #[test]
    fn equal_angles_stay_on_axis() {
        let g = geom();
        for q in [-1.2, -0.4, 0.3, 1.1] {
            let x = g.fk_parallel(&Vector3::repeat(q)).unwrap();
            assert!(x.0.x.abs() < 1e-12 && x.0.y.abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_target_is_rejected() {
        let g = geom();
        let reach = g.upper_link() + g.lower_link();
        let x = FootPosition::new(0.0, 0.0, -(reach + 0.01));
        assert_eq!(g.ik_parallel(&x), Err(KinematicsError::Unreachable));
    }

    #[test]
    fn degenerate_when_foot_on_motor_axis() {
        let g = geom();
        // chain 0 motor axis passes through [*, r, 0]
        let x = Vector3::new(0.05, g.hip_radius(), 0.0);
        assert_eq!(g.ik_chain(0, &x), Err(KinematicsError::Degenerate));
    }

    #[test]
    fn fully_stretched_leg_is_singular() {
        let g = geom();
        let reach = g.upper_link() + g.lower_link();
        let z = -(reach * reach - g.hip_radius() * g.hip_radius()).sqrt();
        let q = g.ik_parallel(&FootPosition::new(0.0, 0.0, z)).unwrap();
        assert_eq!(g.jacobian_parallel(&q), Err(KinematicsError::Singular));
    }

    #[test]
    fn ik_rotation_permutes_chains() {
        let g = geom();
        let x = Vector3::new(0.03, -0.05, -0.25);
        let q = g.ik_parallel(&FootPosition(x)).unwrap();
        let rx = Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0 * PI / 3.0) * x;
        let qr = g.ik_parallel(&FootPosition(rx)).unwrap();
        assert_relative_eq!(qr, Vector3::new(q[2], q[0], q[1]), epsilon = 1e-12);
    }

    #[test]
    fn symmetric_jacobian_columns_are_rotated_copies() {
        let g = geom();
        let j = g.jacobian_parallel(&Vector3::zeros()).unwrap();
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0 * PI / 3.0);
        let c0 = j.column(0).into_owned();
        let c1 = j.column(1).into_owned();
        let c2 = j.column(2).into_owned();
        assert_relative_eq!(rot * c0, c1, epsilon = 1e-12);
        assert_relative_eq!(rot * c1, c2, epsilon = 1e-12);
        assert_relative_eq!(rot * c2, c0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_invalid_geometry() {
        assert!(ChainGeometry::new(0.3, 0.14, 0.2).is_err());
        assert!(ChainGeometry::new(-0.1, 0.14, 0.3).is_err());
        assert!(ChainGeometry::new(0.06, 0.14, f64::NAN).is_err());
    }
}
