use nalgebra::{Matrix3, Vector3};

use super::{FootPosition, JacobianMatrix, SerialLimits};
use crate::error::KinematicsError;

/// Foot position of the template model.
///
/// The leg hangs along `-z` at zero angles. Pitch swings the foot towards
/// `+x`, roll then swings the pitched leg towards `+y`:
/// `x = [e sin p, e cos p sin r, -e cos p cos r]`.
pub fn fk_serial(q: &Vector3<f64>) -> FootPosition {
    let (roll, pitch, ext) = (q.x, q.y, q.z);
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    FootPosition::new(ext * sp, ext * cp * sr, -ext * cp * cr)
}

/// Inverse of [`fk_serial`] on the branch `roll, pitch in (-pi/2, pi/2)`.
pub fn ik_serial(x: &FootPosition, limits: &SerialLimits) -> Result<Vector3<f64>, KinematicsError> {
    let v = x.0;
    let ext = v.norm();
    if !ext.is_finite() || !limits.ext.contains(ext) {
        return Err(KinematicsError::Unreachable);
    }
    let lateral = v.y.hypot(v.z);
    if lateral <= 1e-12 * ext {
        return Err(KinematicsError::Degenerate);
    }
    if v.z >= 0.0 {
        // roll would leave (-pi/2, pi/2)
        return Err(KinematicsError::Unreachable);
    }
    let roll = v.y.atan2(-v.z);
    let pitch = v.x.atan2(lateral);
    Ok(Vector3::new(roll, pitch, ext))
}

/// Analytic Jacobian of [`fk_serial`].
pub fn jacobian_serial(q: &Vector3<f64>) -> JacobianMatrix {
    let (roll, pitch, ext) = (q.x, q.y, q.z);
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    Matrix3::new(
        0.0,
        ext * cp,
        sp,
        ext * cp * cr,
        -ext * sp * sr,
        cp * sr,
        ext * cp * sr,
        ext * sp * cr,
        -cp * cr,
    )
}
