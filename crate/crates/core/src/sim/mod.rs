//! Fixed-step dynamics of the floating-base hopper with the serial template leg.
//!
//! The leg is treated as massless with respect to the body: its joints carry
//! only a small virtual inertia so that the PD-driven joint motion can be
//! integrated. While the foot touches the ground the body receives the
//! actuator force `-J_S^-T tau_S` at the foot point; in flight the body is
//! ballistic and the leg moves freely beneath it.

mod contact;
mod randomization;
mod terrain;

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use contact::{ContactForce, ContactModel, ContactState};
pub use randomization::DynamicsParams;
pub use terrain::Terrain;

use crate::config::HopperConfig;
use crate::conversion::{serial_to_parallel_state, JointTorques, Serial};
use crate::error::SimError;
use crate::geometry::{fk_serial, jacobian_serial, ChainGeometry, ParallelJointState, SerialJointState, SerialLimits};

/// Floating-base state. Linear quantities in the world frame, angular
/// velocity in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub pos: Vector3<f64>,
    pub orient: UnitQuaternion<f64>,
    pub lin_vel: Vector3<f64>,
    pub ang_vel: Vector3<f64>,
}

impl BodyState {
    pub fn at_rest(pos: Vector3<f64>) -> Self {
        BodyState {
            pos,
            orient: UnitQuaternion::identity(),
            lin_vel: Vector3::zeros(),
            ang_vel: Vector3::zeros(),
        }
    }

    /// `(roll, pitch, yaw)` of the body, rad.
    pub fn rpy(&self) -> Vector3<f64> {
        let (r, p, y) = self.orient.euler_angles();
        Vector3::new(r, p, y)
    }

    /// Linear velocity in the yaw-aligned heading frame.
    pub fn heading_velocity(&self) -> Vector3<f64> {
        let yaw = self.rpy().z;
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -yaw) * self.lin_vel
    }

    /// Adds an instantaneous change of linear velocity (an impulse of `m dv`).
    pub fn apply_perturbation(&mut self, dv: &Vector3<f64>) {
        self.lin_vel += dv;
    }

    pub fn kinetic_energy(&self, mass: f64, inertia: &Vector3<f64>) -> f64 {
        0.5 * mass * self.lin_vel.norm_squared() + 0.5 * self.ang_vel.dot(&inertia.component_mul(&self.ang_vel))
    }
}

/// Everything the simulator integrates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub time: f64,
    pub body: BodyState,
    pub leg: SerialJointState,
    pub contact: ContactState,
}

/// Simulator settings that do not vary per episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub dt: f64,
    pub gravity: f64,
    pub leg_inertia: Vector3<f64>,
    pub diverge_limit: f64,
}

impl From<&HopperConfig> for Integrator {
    fn from(cfg: &HopperConfig) -> Self {
        Integrator {
            dt: cfg.sim.dt,
            gravity: cfg.sim.gravity,
            leg_inertia: Vector3::from(cfg.sim.leg_inertia),
            diverge_limit: cfg.sim.diverge_limit,
        }
    }
}

/// One hopper instance. Single-threaded; owns its state.
#[derive(Debug, Clone)]
pub struct Simulator {
    integrator: Integrator,
    params: DynamicsParams,
    terrain: Terrain,
    limits: SerialLimits,
    state: SimState,
    last_contact: Vector3<f64>,
}

impl Simulator {
    pub fn new(cfg: &HopperConfig, params: DynamicsParams, terrain: Terrain, state: SimState) -> Self {
        Simulator {
            integrator: Integrator::from(cfg),
            params,
            terrain,
            limits: cfg.limits.serial(),
            state,
            last_contact: Vector3::zeros(),
        }
    }

    /// Body at rest `drop_height` above the stance pose, leg at the symmetric
    /// stance. With `randomize`, dynamics are drawn from a generator seeded
    /// by `seed`; otherwise nominal values are used.
    pub fn reset(
        cfg: &HopperConfig,
        geom: &ChainGeometry,
        seed: u64,
        terrain: Terrain,
        randomize: bool,
    ) -> Result<(Self, ParallelJointState), SimError> {
        let params = if randomize {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DynamicsParams::randomized(cfg, &mut rng)
        } else {
            DynamicsParams::nominal(cfg)
        };
        let stance = -geom.symmetric_foot_height();
        let leg = SerialJointState::at_rest(Vector3::new(0.0, 0.0, stance));
        let ground = terrain.height(0.0, 0.0);
        let body = BodyState::at_rest(Vector3::new(0.0, 0.0, ground + stance + cfg.sim.drop_height));
        let foot_world = body.pos + fk_serial(&leg.q).0;
        let state = SimState {
            time: 0.0,
            body,
            leg,
            contact: ContactState {
                foot_world,
                ..ContactState::default()
            },
        };
        let parallel = serial_to_parallel_state(geom, &leg)?;
        Ok((Simulator::new(cfg, params, terrain, state), parallel))
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn params(&self) -> &DynamicsParams {
        &self.params
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integrator
    }

    /// Ground reaction of the last step, world frame.
    pub fn last_contact_force(&self) -> Vector3<f64> {
        self.last_contact
    }

    /// Overwrites the state (test and replay hook).
    pub fn set_state(&mut self, state: SimState) {
        self.state = state;
    }

    pub fn apply_perturbation(&mut self, dv: &Vector3<f64>) {
        self.state.body.apply_perturbation(dv);
    }

    /// Body kinetic plus gravitational potential energy (terrain datum z = 0).
    pub fn body_energy(&self) -> f64 {
        let b = &self.state.body;
        b.kinetic_energy(self.params.mass, &self.params.inertia) + self.params.mass * self.integrator.gravity * b.pos.z
    }

    /// Advances one physics step under template efforts `tau`.
    ///
    /// Joints and body rotation use semi-implicit Euler. Body translation
    /// takes a second-order step with the force held over the step, which is
    /// exact for torque-free flight.
    pub fn step(&mut self, tau: &JointTorques<Serial>) -> Result<(), SimError> {
        let Integrator {
            dt,
            gravity,
            leg_inertia,
            diverge_limit,
        } = self.integrator;
        let p = &self.params;
        let s = &mut self.state;
        let rot = s.body.orient.to_rotation_matrix();

        let foot_b = fk_serial(&s.leg.q).0;
        let js = jacobian_serial(&s.leg.q);
        let foot_w = s.body.pos + rot * foot_b;
        let foot_vel_w = s.body.lin_vel + rot * (s.body.ang_vel.cross(&foot_b) + js * s.leg.qd);
        let cf = p
            .contact
            .force(&foot_w, &foot_vel_w, &self.terrain, &mut s.contact.anchor);
        let in_contact = cf.penetration > 0.0;
        let ground_b = rot.transpose() * cf.force;

        // joints: virtual inertia driven by actuators and the ground
        let qdd = (tau.tau + js.transpose() * ground_b).component_div(&leg_inertia);

        // body: actuator reaction at the foot while in contact
        let (force_b, moment_b) = if in_contact {
            let js_inv_t = js
                .transpose()
                .try_inverse()
                .ok_or(SimError::Kinematics(crate::KinematicsError::Singular))?;
            let on_body = -(js_inv_t * tau.tau);
            (on_body, foot_b.cross(&on_body))
        } else {
            (Vector3::zeros(), Vector3::zeros())
        };

        let g = Vector3::new(0.0, 0.0, -gravity);
        let acc = rot * force_b / p.mass;
        let v = s.body.lin_vel;
        s.body.lin_vel = v + (acc + g) * dt;
        s.body.pos += v * dt + (acc + g) * (0.5 * dt * dt);

        let w = s.body.ang_vel;
        let wdot = (moment_b - w.cross(&p.inertia.component_mul(&w))).component_div(&p.inertia);
        s.body.ang_vel = w + wdot * dt;
        let turned = s.body.orient * UnitQuaternion::from_scaled_axis(s.body.ang_vel * dt);
        s.body.orient = UnitQuaternion::new_normalize(turned.into_inner());

        s.leg.qd += qdd * dt;
        s.leg.q += s.leg.qd * dt;
        for j in 0..3 {
            let r = self.limits.range(j);
            if s.leg.q[j] < r.min {
                s.leg.q[j] = r.min;
                s.leg.qd[j] = s.leg.qd[j].max(0.0);
            } else if s.leg.q[j] > r.max {
                s.leg.q[j] = r.max;
                s.leg.qd[j] = s.leg.qd[j].min(0.0);
            }
        }

        s.time += dt;
        s.contact.in_contact = in_contact;
        s.contact.penetration = cf.penetration;
        s.contact.normal_force = cf.normal_force;
        s.contact.sliding = cf.sliding;
        s.contact.foot_world = s.body.pos + s.body.orient * fk_serial(&s.leg.q).0;
        self.last_contact = cf.force;

        let values = s
            .body
            .pos
            .iter()
            .chain(s.body.lin_vel.iter())
            .chain(s.body.ang_vel.iter())
            .chain(s.leg.q.iter())
            .chain(s.leg.qd.iter());
        for &v in values {
            if !v.is_finite() || v.abs() > diverge_limit {
                return Err(SimError::NumericalDiverged("simulator state"));
            }
        }
        Ok(())
    }
}
