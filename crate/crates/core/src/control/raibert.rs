use nalgebra::{UnitQuaternion, Vector2, Vector3};

use super::{Command, PhaseClock};
use crate::config::{HopperConfig, RaibertConfig};
use crate::conversion::{congruent_serial_gains, JointTorques, MatchedPose, PdGains};
use crate::error::ConfigError;
use crate::geometry::{fk_serial, ChainGeometry, FootPosition, ParallelLimits, Range};
use crate::sim::SimState;

/// Swing retraction profile over flight progress `s`: shorten over the
/// first quarter, hold, and be back at full length well before touchdown.
fn swing_retraction(s: f64) -> f64 {
    (4.0 * s).min((0.85 - s) / 0.3).clamp(0.0, 1.0)
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Flight from lift-off to the next scheduled touchdown.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FlightPlan {
    start: f64,
    duration: f64,
    /// Foot offset from the hip at lift-off in the levelled heading frame.
    foot: Vector2<f64>,
}

/// Stance leg-length trajectory started at touchdown: a quintic from the
/// touchdown length, rate and acceleration to the hop length, the lift-off
/// rate and free-fall acceleration, so the leg unloads smoothly at lift-off.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StanceSegment {
    start: f64,
    duration: f64,
    length: f64,
    rate: f64,
    acc: f64,
    liftoff_rate: f64,
    liftoff_acc: f64,
}

impl StanceSegment {
    /// Length, rate and acceleration at time `t`.
    fn sample(&self, t: f64, hop: f64) -> (f64, f64, f64) {
        let d = self.duration;
        let s = ((t - self.start) / d).clamp(0.0, 1.0);
        let (s2, s3, s4, s5) = (s * s, s.powi(3), s.powi(4), s.powi(5));
        let c = [
            self.length,
            self.rate * d,
            self.acc * d * d,
            self.liftoff_acc * d * d,
            self.liftoff_rate * d,
            hop,
        ];
        let h = [
            1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
            s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
            0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
            0.5 * s3 - s4 + 0.5 * s5,
            -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
            10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        ];
        let dh = [
            -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
            1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
            s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
            1.5 * s2 - 4.0 * s3 + 2.5 * s4,
            -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
            30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        ];
        let ddh = [
            -60.0 * s + 180.0 * s2 - 120.0 * s3,
            -36.0 * s + 96.0 * s2 - 60.0 * s3,
            1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3,
            3.0 * s - 12.0 * s2 + 10.0 * s3,
            -24.0 * s + 84.0 * s2 - 60.0 * s3,
            60.0 * s - 180.0 * s2 + 120.0 * s3,
        ];
        let dot = |w: &[f64; 6]| w.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        (dot(&h), dot(&dh) / d, dot(&ddh) / (d * d))
    }
}

/// Foot-placement hopping controller producing motor position targets.
///
/// Touchdown starts a stance leg-length trajectory that ends at the close of
/// the scheduled stance with the lift-off speed whose ballistic flight lasts
/// half a period, which pulls the next touchdown onto the schedule. In
/// flight the leg shortens by up to `retract` during scheduled swing and the
/// foot is placed at the neutral point plus a velocity correction. In stance
/// the hip joints steer the body attitude.
#[derive(Debug, Clone)]
pub struct RaibertController {
    cfg: RaibertConfig,
    geom: ChainGeometry,
    limits: ParallelLimits,
    nominal_length: f64,
    ext_limits: Range,
    motor_gains: PdGains,
    mass: f64,
    gravity: f64,
    control_dt: f64,
    reference: Option<Vector2<f64>>,
    stance: Option<StanceSegment>,
    flight: Option<FlightPlan>,
    last_liftoff: f64,
    /// Duration of the last completed stance, s.
    stance_time: Option<f64>,
    /// Accumulated placement correction in the heading frame, m.
    placement_bias: Vector2<f64>,
    /// Accumulated lift-off speed correction from touchdown timing, m/s.
    liftoff_trim: f64,
}

impl RaibertController {
    pub fn new(cfg: &HopperConfig) -> Result<Self, ConfigError> {
        let geom = cfg.chain_geometry()?;
        let nominal_length = -geom.symmetric_foot_height();
        Ok(RaibertController {
            cfg: cfg.raibert,
            geom,
            limits: cfg.limits.parallel(),
            nominal_length,
            ext_limits: cfg.limits.serial_ext,
            motor_gains: PdGains::uniform(cfg.actuation.kp, cfg.actuation.kd),
            mass: cfg.sim.body_mass,
            gravity: cfg.sim.gravity,
            control_dt: cfg.sim.control_period(),
            reference: None,
            stance: None,
            flight: None,
            last_liftoff: f64::NEG_INFINITY,
            stance_time: None,
            placement_bias: Vector2::zeros(),
            liftoff_trim: 0.0,
        })
    }

    pub fn config(&self) -> &RaibertConfig {
        &self.cfg
    }

    pub fn in_stance_segment(&self) -> bool {
        self.stance.is_some()
    }

    /// Lift-off speed along the leg for a flight of half the gait period.
    pub fn liftoff_speed(&self, period: f64) -> f64 {
        self.cfg.liftoff_gain * self.gravity * period / 4.0
    }

    fn update_stance(&mut self, state: &SimState, clock: &PhaseClock, v_des: &Vector2<f64>) {
        let t = state.time;
        if let Some(seg) = self.stance {
            let end = seg.start + seg.duration;
            // keep pushing while the body still rises, but not indefinitely
            let stalled = state.body.lin_vel.z <= 0.0 || t >= end + 0.25 * clock.period() - 1e-9;
            if t >= end - 1e-9 && (!state.contact.in_contact || stalled) {
                self.stance = None;
                self.last_liftoff = t;
                self.stance_time = Some(t - seg.start);
                let hv = state.body.heading_velocity();
                self.placement_bias += (Vector2::new(hv.x, hv.y) - v_des) * self.cfg.k_i;
                let period = clock.period();
                let tilt = UnitQuaternion::from_euler_angles(state.body.rpy().x, state.body.rpy().y, 0.0);
                let foot = tilt * fk_serial(&state.leg.q).0;
                self.flight = Some(FlightPlan {
                    start: t,
                    duration: ((1.0 - clock.fraction()) * period).max(0.1 * period),
                    foot: Vector2::new(foot.x, foot.y),
                });
            }
        }
        // a segment that ran out without lift-off is followed directly by a new push
        let restart = self.stance.is_none() && self.last_liftoff == t;
        if self.stance.is_none()
            && state.contact.in_contact
            && (restart || t - self.last_liftoff > 0.5 * self.control_dt)
        {
            let period = clock.period();
            let remaining = if clock.in_stance() {
                0.5 - clock.fraction()
            } else {
                1.5 - clock.fraction()
            } * period;
            // the foot is planted, so the leg shortens at the hip's speed towards it
            let foot = state.body.orient * fk_serial(&state.leg.q).0;
            let rate = -state.body.lin_vel.dot(&foot) / foot.norm();
            let duration = remaining.clamp(self.cfg.min_stance, self.cfg.max_stance);
            // a late touchdown means the last flight was too long
            let frac = clock.fraction();
            let late = if frac < 0.5 { frac } else { frac - 1.0 } * period;
            let nominal = self.liftoff_speed(period);
            self.liftoff_trim = (self.liftoff_trim - 0.5 * self.gravity * late * self.cfg.timing_gain)
                .clamp(-0.5 * nominal, 0.5 * nominal);
            let liftoff_rate = nominal + self.liftoff_trim;
            self.flight = None;
            self.stance = Some(StanceSegment {
                start: t,
                duration,
                length: state.leg.q.z,
                rate,
                // start near the constant deceleration that reverses the rate in time
                acc: (liftoff_rate - rate).max(0.0) / duration,
                liftoff_rate,
                liftoff_acc: -self.gravity,
            });
        }
    }

    /// Flight leg length: retracted mid-flight, back at hop length for touchdown.
    fn flight_length(&self, state: &SimState, clock: &PhaseClock) -> f64 {
        let len = self.cfg.hop_length - self.cfg.retract * swing_retraction(self.flight_progress(state.time, clock));
        self.ext_limits.clamp(len)
    }

    /// Motor target in stance. The template efforts are the leg force that
    /// carries the body along the stance trajectory and the hip torques that
    /// steer the attitude; the target is the one for which the motor PD
    /// produces their motor equivalent over the coming control period.
    fn stance_target(&self, state: &SimState, seg: &StanceSegment) -> Option<Vector3<f64>> {
        let l0 = self.cfg.hop_length;
        let (l, ld, ldd) = seg.sample(state.time + 0.5 * self.control_dt, l0);
        let l = l.max(l0 - self.cfg.max_compression);
        let (q, qd) = (state.leg.q, state.leg.qd);
        let pose = MatchedPose::new(&self.geom, &q).ok()?;
        let leg = congruent_serial_gains(&self.geom, &self.motor_gains, &q).ok()?;
        let force = leg.kp.z * (l - q.z) + leg.kd.z * (ld - qd.z) + self.mass * (self.gravity + ldd);
        let rpy = state.body.rpy();
        let w = state.body.ang_vel;
        let tau = Vector3::new(
            self.cfg.k_att * rpy.x + self.cfg.d_att * w.x,
            -(self.cfg.k_att * rpy.y + self.cfg.d_att * w.y),
            force,
        );
        let tau_p = pose.serial_to_parallel(&JointTorques::new(tau)).ok()?.tau;
        let qd_p = pose.parallel_velocity(&qd);
        let g = &self.motor_gains;
        let target =
            pose.parallel_q + qd_p * (0.5 * self.control_dt) + (tau_p + g.kd.component_mul(&qd_p)).component_div(&g.kp);
        Some(self.limits.clamp(&target))
    }

    /// Progress through the current flight in `[0, 1]`. Without a recorded
    /// lift-off the schedule stands in for it.
    fn flight_progress(&self, t: f64, clock: &PhaseClock) -> f64 {
        match &self.flight {
            Some(f) => ((t - f.start) / f.duration).clamp(0.0, 1.0),
            None if clock.in_stance() => 1.0,
            None => clock.half_progress(),
        }
    }

    /// Swing foot placement in the heading frame for velocity `v`: the
    /// neutral point plus proportional and accumulated velocity corrections.
    ///
    /// The neutral point is the symmetric touchdown of an inverted pendulum
    /// of length `hop_length` whose stance force carries the body weight
    /// over the whole `period`.
    pub fn foot_placement(
        &self,
        v: &Vector2<f64>,
        v_des: &Vector2<f64>,
        stance_time: f64,
        period: f64,
    ) -> Vector2<f64> {
        let neutral = if stance_time > 0.0 {
            let w = (self.gravity * period / (stance_time * self.cfg.hop_length)).sqrt();
            (0.5 * w * stance_time).tanh() / w
        } else {
            0.0
        };
        v * neutral + (v - v_des) * self.cfg.k_v + self.placement_bias
    }

    /// Motor position target for the current state.
    pub fn target(&mut self, state: &SimState, clock: &PhaseClock, command: &Command) -> Vector3<f64> {
        let body = &state.body;
        let pos = Vector2::new(body.pos.x, body.pos.y);
        let reference = self.reference.get_or_insert(pos);
        let rpy = body.rpy();
        let yaw = UnitQuaternion::from_euler_angles(0.0, 0.0, rpy.z);
        let ref_err = yaw.inverse() * Vector3::new(reference.x - pos.x, reference.y - pos.y, 0.0);
        let v_des = command.v_d + Vector2::new(ref_err.x, ref_err.y) * self.cfg.k_pos;
        let step = yaw * Vector3::new(command.v_d.x, command.v_d.y, 0.0) * self.control_dt;
        *reference += Vector2::new(step.x, step.y);
        self.update_stance(state, clock, &v_des);

        if let Some(seg) = self.stance {
            if let Some(target) = self.stance_target(state, &seg) {
                return target;
            }
        }
        let length = self.flight_length(state, clock);
        let foot = {
            let hv = body.heading_velocity();
            let stance_time = self.stance_time.unwrap_or(0.5 * clock.period());
            let f = self.foot_placement(&Vector2::new(hv.x, hv.y), &v_des, stance_time, clock.period());
            let f = match &self.flight {
                // clear the ground before swinging the foot across
                Some(fp) => {
                    let s = self.flight_progress(state.time, clock);
                    fp.foot + (f - fp.foot) * smoothstep((s - 0.1) / 0.6)
                }
                None => f,
            };
            let f = if f.norm() > 0.6 * length {
                f * (0.6 * length / f.norm())
            } else {
                f
            };
            let down = (length * length - f.norm_squared()).sqrt();
            let tilt = UnitQuaternion::from_euler_angles(rpy.x, rpy.y, 0.0);
            tilt.inverse() * Vector3::new(f.x, f.y, -down)
        };
        self.reachable(&foot)
    }

    /// Motor angles for `foot`, or for the farthest reachable point on the
    /// segment from the nominal stance foot towards it.
    pub fn reachable(&self, foot: &Vector3<f64>) -> Vector3<f64> {
        let home = Vector3::new(0.0, 0.0, -self.nominal_length);
        let solve = |x: &Vector3<f64>| {
            self.geom
                .ik_parallel(&FootPosition(*x))
                .ok()
                .filter(|q| self.geom.in_workspace(q, &self.limits))
        };
        if let Some(q) = solve(foot) {
            return q;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if solve(&(home + (foot - home) * mid)).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        solve(&(home + (foot - home) * lo)).unwrap_or_else(Vector3::zeros)
    }
}
