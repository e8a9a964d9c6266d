use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::HopperConfig;
use crate::control::{build_observation, reward, Command, Observation, PhaseClock, RewardBreakdown};
use crate::conversion::{ActuationPipeline, ConversionMode, JointTorques, Parallel, Serial};
use crate::error::{Error, SimError};
use crate::geometry::{ChainGeometry, ParallelJointState, ParallelLimits};
use crate::sim::{BodyState, DynamicsParams, SimState, Simulator, Terrain};

/// Episode settings shared by the CLI runner and the protocol server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvOptions {
    pub seed: u64,
    pub terrain: Terrain,
    pub command: Command,
    pub mode: ConversionMode,
    pub randomize: bool,
    /// Episode length, s.
    pub horizon: f64,
    /// Scripted base velocity kicks `(t, dv)`.
    #[serde(default)]
    pub perturbations: Vec<(f64, Vector3<f64>)>,
}

impl EnvOptions {
    pub fn new(seed: u64, command: Command, horizon: f64) -> Self {
        EnvOptions {
            seed,
            terrain: Terrain::Flat,
            command,
            mode: ConversionMode::default(),
            randomize: false,
            horizon,
            perturbations: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.command.validate()?;
        self.terrain.validate().map_err(Error::Episode)?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Episode("duration must be > 0".into()));
        }
        for (t, dv) in &self.perturbations {
            if !(*t >= 0.0 && *t < self.horizon) || !dv.iter().all(|v| v.is_finite()) {
                return Err(Error::Episode(format!(
                    "perturbation at t = {t} outside [0, {})",
                    self.horizon
                )));
            }
        }
        Ok(())
    }
}

/// One physics step as seen by the logger: state at time `t` and the
/// efforts applied over `[t, t + dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsRecord {
    pub t: f64,
    pub body: BodyState,
    pub motor: ParallelJointState,
    pub tau_parallel: JointTorques<Parallel>,
    pub tau_serial: JointTorques<Serial>,
    pub in_contact: bool,
    pub phase: f64,
    pub action: Vector3<f64>,
}

/// Ground truth available to an asymmetric critic, never to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Privileged {
    pub base_lin_vel: Vector3<f64>,
    pub contact: bool,
    pub mass: f64,
    pub friction: f64,
    pub contact_stiffness: f64,
    pub gain_scale: f64,
}

/// Why an episode stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Fall,
    Fault(String),
}

/// Result of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub termination: Option<Termination>,
    pub privileged: Privileged,
    pub records: Vec<PhysicsRecord>,
}

/// A hopper episode driven at the control rate. Each control step holds the
/// motor target for `control_decimation` physics steps of PD, conversion
/// and integration.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: HopperConfig,
    geom: ChainGeometry,
    limits: ParallelLimits,
    opts: EnvOptions,
    sim: Simulator,
    clock: PhaseClock,
    pipeline: ActuationPipeline,
    prev_action: Vector3<f64>,
    obs: Observation,
    control_steps: u64,
    next_kick: usize,
    termination: Option<Termination>,
}

impl Env {
    pub fn new(cfg: &HopperConfig, opts: EnvOptions) -> Result<Self, Error> {
        cfg.validate()?;
        opts.validate()?;
        let geom = cfg.chain_geometry()?;
        let (sim, motor) = Simulator::reset(cfg, &geom, opts.seed, opts.terrain, opts.randomize)?;
        let pipeline = ActuationPipeline::from_config(&geom, &cfg.actuation, cfg.limits.serial(), opts.mode)?
            .with_gain_scale(sim.params().gain_scale);
        let clock = PhaseClock::new(opts.command.period);
        let prev_action = motor.q;
        let obs = build_observation(&geom, sim.state(), &clock, &opts.command, &prev_action)?;
        let mut opts = opts;
        opts.perturbations.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Env {
            cfg: cfg.clone(),
            geom,
            limits: cfg.limits.parallel(),
            opts,
            sim,
            clock,
            pipeline,
            prev_action,
            obs,
            control_steps: 0,
            next_kick: 0,
            termination: None,
        })
    }

    pub fn config(&self) -> &HopperConfig {
        &self.cfg
    }

    pub fn geometry(&self) -> &ChainGeometry {
        &self.geom
    }

    pub fn options(&self) -> &EnvOptions {
        &self.opts
    }

    pub fn state(&self) -> &SimState {
        self.sim.state()
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn params(&self) -> &DynamicsParams {
        self.sim.params()
    }

    pub fn clock(&self) -> &PhaseClock {
        &self.clock
    }

    pub fn command(&self) -> &Command {
        &self.opts.command
    }

    pub fn pipeline(&self) -> &ActuationPipeline {
        &self.pipeline
    }

    pub fn observation(&self) -> Observation {
        self.obs
    }

    pub fn prev_action(&self) -> Vector3<f64> {
        self.prev_action
    }

    pub fn time(&self) -> f64 {
        self.sim.state().time
    }

    pub fn is_done(&self) -> bool {
        self.termination.is_some()
    }

    pub fn termination(&self) -> Option<&Termination> {
        self.termination.as_ref()
    }

    pub fn privileged(&self) -> Privileged {
        let p = self.sim.params();
        let s = self.sim.state();
        Privileged {
            base_lin_vel: s.body.lin_vel,
            contact: s.contact.in_contact,
            mass: p.mass,
            friction: p.contact.friction,
            contact_stiffness: p.contact.stiffness,
            gain_scale: p.gain_scale,
        }
    }

    fn fell(&self) -> bool {
        let s = self.sim.state();
        let rpy = s.body.rpy();
        let e = &self.cfg.episode;
        let ground = self.opts.terrain.height(s.body.pos.x, s.body.pos.y);
        rpy.x.abs() > e.fall_angle || rpy.y.abs() > e.fall_angle || s.body.pos.z - ground < e.fall_height
    }

    /// Applies motor target `action` for one control period. Targets are
    /// clipped to the motor limits. Panics if called after the episode ended.
    pub fn step(&mut self, action: &Vector3<f64>) -> Result<Transition, Error> {
        assert!(self.termination.is_none(), "step after episode end");
        if !action.iter().all(|v| v.is_finite()) {
            return Err(Error::Episode("action contains non-finite values".into()));
        }
        let action = self.limits.clamp(action);
        let dt = self.cfg.sim.dt;
        let decimation = self.cfg.sim.control_decimation;
        let mut records = Vec::with_capacity(decimation as usize);
        let mut last_tau = JointTorques::<Serial>::zeros();
        let mut termination = None;

        for _ in 0..decimation {
            while let Some((t, dv)) = self.opts.perturbations.get(self.next_kick) {
                if *t > self.sim.state().time + 1e-9 {
                    break;
                }
                let dv = *dv;
                self.sim.apply_perturbation(&dv);
                self.next_kick += 1;
            }
            let s = *self.sim.state();
            let act = match self.pipeline.actuate(&self.geom, &action, &s.leg) {
                Ok(a) => a,
                Err(e) => {
                    termination = Some(Termination::Fault(SimError::from(e).to_string()));
                    break;
                }
            };
            records.push(PhysicsRecord {
                t: s.time,
                body: s.body,
                motor: act.parallel,
                tau_parallel: act.tau_parallel,
                tau_serial: act.tau_serial,
                in_contact: s.contact.in_contact,
                phase: self.clock.phase(),
                action,
            });
            last_tau = act.tau_serial;
            if let Err(e) = self.sim.step(&act.tau_serial) {
                termination = Some(Termination::Fault(e.to_string()));
                break;
            }
            self.clock.advance(dt);
            if self.fell() {
                termination = Some(Termination::Fall);
                break;
            }
        }
        self.control_steps += 1;
        if termination.is_none()
            && self.control_steps as f64 * self.cfg.sim.control_period() >= self.opts.horizon - 1e-9
        {
            termination = Some(Termination::Horizon);
        }

        let r = reward(
            &self.cfg.reward,
            self.sim.state(),
            &self.clock,
            &self.opts.command,
            &action,
            &self.prev_action,
            &last_tau,
        );
        self.prev_action = action;
        if !matches!(termination, Some(Termination::Fault(_))) {
            match build_observation(&self.geom, self.sim.state(), &self.clock, &self.opts.command, &action) {
                Ok(o) => self.obs = o,
                Err(e) => termination = Some(Termination::Fault(SimError::from(e).to_string())),
            }
        }
        self.termination = termination.clone();
        Ok(Transition {
            obs: self.obs,
            reward: r,
            done: termination.is_some(),
            termination,
            privileged: self.privileged(),
            records,
        })
    }
}
