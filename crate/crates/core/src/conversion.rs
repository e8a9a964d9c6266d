//! Serial/parallel conversion.
//!
//! The simulator runs the serial template leg while the controller (and the
//! real robot) speak parallel motor coordinates. Each physics step maps the
//! template state into motor coordinates, runs the motor PD law there, and
//! maps the resulting motor torques back onto the template joints through
//! the common foot force. The alternative joint-target mapping converts the
//! controller's motor targets into template targets instead, and runs a
//! PD law on the template joints directly.

use std::fmt;
use std::marker::PhantomData;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::ActuationConfig;
use crate::error::KinematicsError;
use crate::geometry::{
    fk_serial, ik_serial, jacobian_serial, ChainGeometry, JacobianMatrix, ParallelJointState, SerialJointState,
    SerialLimits,
};

/// Marker for torques expressed on the parallel motors (Nm).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallel {}
/// Marker for efforts on the template joints (Nm, Nm, N).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Serial {}

/// Joint efforts tagged with the coordinate frame they belong to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTorques<F> {
    pub tau: Vector3<f64>,
    frame: PhantomData<F>,
}

impl<F> JointTorques<F> {
    pub fn new(tau: Vector3<f64>) -> Self {
        JointTorques {
            tau,
            frame: PhantomData,
        }
    }

    pub fn zeros() -> Self {
        Self::new(Vector3::zeros())
    }

    /// Symmetric per-joint saturation. Never flips a sign.
    pub fn clamped(&self, limit: &Vector3<f64>) -> Self {
        Self::new(self.tau.zip_map(limit, |t, l| t.clamp(-l, l)))
    }
}

/// Per-joint PD gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: Vector3<f64>,
    pub kd: Vector3<f64>,
}

impl PdGains {
    /// Same gains on every joint.
    pub fn uniform(kp: f64, kd: f64) -> Self {
        PdGains {
            kp: Vector3::repeat(kp),
            kd: Vector3::repeat(kd),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        PdGains {
            kp: self.kp * s,
            kd: self.kd * s,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kp.iter().all(|&k| k > 0.0) && self.kd.iter().all(|&k| k >= 0.0)
    }
}

/// How controller targets reach the template joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionMode {
    /// PD on the motors, torques mapped through the Jacobians.
    #[default]
    TorqueMapping,
    /// Targets mapped kinematically, PD on the template joints.
    JointTargetMapping,
}

impl fmt::Display for ConversionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConversionMode::TorqueMapping => "torque",
            ConversionMode::JointTargetMapping => "joint-target",
        })
    }
}

impl FromStr for ConversionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "torque" | "torque_mapping" => Ok(ConversionMode::TorqueMapping),
            "joint-target" | "joint_target" | "joint_target_mapping" => Ok(ConversionMode::JointTargetMapping),
            other => Err(format!(
                "unknown conversion mode `{other}` (expected torque or joint-target)"
            )),
        }
    }
}

/// Template pose together with the motor pose describing the same foot point,
/// and the Jacobians of both at that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPose {
    pub serial_q: Vector3<f64>,
    pub parallel_q: Vector3<f64>,
    pub foot: Vector3<f64>,
    pub j_serial: JacobianMatrix,
    pub j_parallel: JacobianMatrix,
    j_parallel_inv: Matrix3<f64>,
}

impl MatchedPose {
    /// Motor angles come from `IK_P(FK_S(q_S))`, and the parallel Jacobian is
    /// evaluated there so both Jacobians describe the identical foot point.
    pub fn new(geom: &ChainGeometry, serial_q: &Vector3<f64>) -> Result<Self, KinematicsError> {
        let foot = fk_serial(serial_q);
        let parallel_q = geom.ik_parallel(&foot)?;
        let j_parallel = geom.jacobian_parallel(&parallel_q)?;
        let j_parallel_inv = j_parallel.try_inverse().ok_or(KinematicsError::Singular)?;
        let j_serial = jacobian_serial(serial_q);
        if j_serial.determinant().abs() < 1e-12 {
            return Err(KinematicsError::Singular);
        }
        Ok(MatchedPose {
            serial_q: *serial_q,
            parallel_q,
            foot: foot.0,
            j_serial,
            j_parallel,
            j_parallel_inv,
        })
    }

    /// `qd_P = J_P^-1 J_S qd_S`.
    pub fn parallel_velocity(&self, serial_qd: &Vector3<f64>) -> Vector3<f64> {
        self.j_parallel_inv * (self.j_serial * serial_qd)
    }

    /// Foot force produced by motor torques: `F = J_P^-T tau_P`.
    pub fn foot_force(&self, tp: &JointTorques<Parallel>) -> Vector3<f64> {
        self.j_parallel_inv.transpose() * tp.tau
    }

    /// `tau_S = J_S^T J_P^-T tau_P`.
    pub fn parallel_to_serial(&self, tp: &JointTorques<Parallel>) -> JointTorques<Serial> {
        JointTorques::new(self.j_serial.transpose() * self.foot_force(tp))
    }

    /// Inverse of [`parallel_to_serial`](Self::parallel_to_serial).
    pub fn serial_to_parallel(&self, ts: &JointTorques<Serial>) -> Result<JointTorques<Parallel>, KinematicsError> {
        let js_inv_t = self
            .j_serial
            .transpose()
            .try_inverse()
            .ok_or(KinematicsError::Singular)?;
        Ok(JointTorques::new(self.j_parallel.transpose() * (js_inv_t * ts.tau)))
    }
}

/// Template joint state to motor joint state.
pub fn serial_to_parallel_state(
    geom: &ChainGeometry,
    s: &SerialJointState,
) -> Result<ParallelJointState, KinematicsError> {
    let pose = MatchedPose::new(geom, &s.q)?;
    Ok(ParallelJointState {
        q: pose.parallel_q,
        qd: pose.parallel_velocity(&s.qd),
    })
}

/// Motor PD law `tau = Kp (target - q) - Kd qd`, saturated at `tau_max`.
pub fn pd_torque(
    target: &Vector3<f64>,
    state: &ParallelJointState,
    gains: &PdGains,
    tau_max: f64,
) -> JointTorques<Parallel> {
    let raw = gains.kp.component_mul(&(target - state.q)) - gains.kd.component_mul(&state.qd);
    JointTorques::<Parallel>::new(raw).clamped(&Vector3::repeat(tau_max))
}

/// Motor torques to template efforts at the template pose `serial_q`.
pub fn parallel_to_serial_torque(
    geom: &ChainGeometry,
    tp: &JointTorques<Parallel>,
    serial_q: &Vector3<f64>,
) -> Result<JointTorques<Serial>, KinematicsError> {
    Ok(MatchedPose::new(geom, serial_q)?.parallel_to_serial(tp))
}

/// Motor targets to template targets: `a_S = IK_S(FK_P(a_P))`.
pub fn joint_target_mapping(
    geom: &ChainGeometry,
    target: &Vector3<f64>,
    limits: &SerialLimits,
) -> Result<Vector3<f64>, KinematicsError> {
    ik_serial(&geom.fk_parallel(target)?, limits)
}

/// PD law on the template joints (joint-target mapping mode only).
pub fn serial_pd_torque(
    target: &Vector3<f64>,
    state: &SerialJointState,
    gains: &PdGains,
    effort_max: &Vector3<f64>,
) -> JointTorques<Serial> {
    let raw = gains.kp.component_mul(&(target - state.q)) - gains.kd.component_mul(&state.qd);
    JointTorques::<Serial>::new(raw).clamped(effort_max)
}

/// Template gains equivalent to uniform motor gains at a given pose: the
/// diagonal of `J_S^T J_P^-T K J_P^-1 J_S`.
pub fn congruent_serial_gains(
    geom: &ChainGeometry,
    motor: &PdGains,
    serial_q: &Vector3<f64>,
) -> Result<PdGains, KinematicsError> {
    let pose = MatchedPose::new(geom, serial_q)?;
    let m = pose.j_parallel_inv * pose.j_serial;
    let map = |k: &Vector3<f64>| (m.transpose() * Matrix3::from_diagonal(k) * m).diagonal();
    Ok(PdGains {
        kp: map(&motor.kp),
        kd: map(&motor.kd),
    })
}

/// Result of one actuation update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actuation {
    /// Motor state seen by the PD law (and by the observation).
    pub parallel: ParallelJointState,
    /// Motor torques. In joint-target mode these are the motor-equivalent of
    /// the template efforts, reported for logging only.
    pub tau_parallel: JointTorques<Parallel>,
    /// Efforts sent to the simulator.
    pub tau_serial: JointTorques<Serial>,
}

/// Per-run actuation settings: mode, gains and limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationPipeline {
    pub mode: ConversionMode,
    pub motor_gains: PdGains,
    pub serial_gains: PdGains,
    pub tau_max: f64,
    pub serial_effort_max: Vector3<f64>,
    pub serial_limits: SerialLimits,
}

impl ActuationPipeline {
    pub fn from_config(
        geom: &ChainGeometry,
        cfg: &ActuationConfig,
        serial_limits: SerialLimits,
        mode: ConversionMode,
    ) -> Result<Self, KinematicsError> {
        let motor_gains = PdGains::uniform(cfg.kp, cfg.kd);
        let stance = Vector3::new(0.0, 0.0, -geom.symmetric_foot_height());
        let derived = congruent_serial_gains(geom, &motor_gains, &stance)?;
        let serial_gains = PdGains {
            kp: cfg.serial_kp.map(Vector3::from).unwrap_or(derived.kp),
            kd: cfg.serial_kd.map(Vector3::from).unwrap_or(derived.kd),
        };
        Ok(ActuationPipeline {
            mode,
            motor_gains,
            serial_gains,
            tau_max: cfg.tau_max,
            serial_effort_max: Vector3::from(cfg.serial_effort_max),
            serial_limits,
        })
    }

    /// Scales both PD laws (domain randomization of control gains).
    pub fn with_gain_scale(mut self, s: f64) -> Self {
        self.motor_gains = self.motor_gains.scaled(s);
        self.serial_gains = self.serial_gains.scaled(s);
        self
    }

    /// Computes template efforts for motor target `target` at template state `s`.
    pub fn actuate(
        &self,
        geom: &ChainGeometry,
        target: &Vector3<f64>,
        s: &SerialJointState,
    ) -> Result<Actuation, KinematicsError> {
        let pose = MatchedPose::new(geom, &s.q)?;
        let parallel = ParallelJointState {
            q: pose.parallel_q,
            qd: pose.parallel_velocity(&s.qd),
        };
        match self.mode {
            ConversionMode::TorqueMapping => {
                let tau_parallel = pd_torque(target, &parallel, &self.motor_gains, self.tau_max);
                let tau_serial = pose.parallel_to_serial(&tau_parallel).clamped(&self.serial_effort_max);
                Ok(Actuation {
                    parallel,
                    tau_parallel,
                    tau_serial,
                })
            }
            ConversionMode::JointTargetMapping => {
                let serial_target = joint_target_mapping(geom, target, &self.serial_limits)?;
                let tau_serial = serial_pd_torque(&serial_target, s, &self.serial_gains, &self.serial_effort_max);
                let tau_parallel = pose.serial_to_parallel(&tau_serial)?;
                Ok(Actuation {
                    parallel,
                    tau_parallel,
                    tau_serial,
                })
            }
        }
    }
}
