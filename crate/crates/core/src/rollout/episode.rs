use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::env::{Env, EnvOptions, PhysicsRecord, Termination};
use crate::config::HopperConfig;
use crate::control::{PolicyRuntime, RaibertController};
use crate::error::Error;

/// Which controller produces the motor targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    Raibert,
    Policy { weights: PathBuf },
}

/// Everything needed to reproduce an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub controller: ControllerSpec,
    #[serde(flatten)]
    pub env: EnvOptions,
}

/// Produces a motor target from the environment at each control step.
pub trait Controller {
    fn act(&mut self, env: &Env) -> Result<Vector3<f64>, Error>;
}

impl Controller for RaibertController {
    fn act(&mut self, env: &Env) -> Result<Vector3<f64>, Error> {
        Ok(self.target(env.state(), env.clock(), env.command()))
    }
}

impl Controller for PolicyRuntime {
    fn act(&mut self, env: &Env) -> Result<Vector3<f64>, Error> {
        Ok(self.act(&env.observation())?.action)
    }
}

/// Replays a recorded action stream.
#[derive(Debug, Clone)]
pub struct ActionStream {
    actions: std::vec::IntoIter<Vector3<f64>>,
}

impl ActionStream {
    pub fn new(actions: Vec<Vector3<f64>>) -> Self {
        ActionStream {
            actions: actions.into_iter(),
        }
    }
}

impl Controller for ActionStream {
    fn act(&mut self, _env: &Env) -> Result<Vector3<f64>, Error> {
        self.actions
            .next()
            .ok_or_else(|| Error::Episode("action stream ended before the episode".into()))
    }
}

/// One logged physics step with the reward of its control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub record: PhysicsRecord,
    pub reward: f64,
}

/// Summary statistics of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time until a fall or fault, or the episode length, s.
    pub surviving_time: f64,
    /// Mean squared horizontal distance from the command-integrated
    /// reference position, m^2.
    pub position_tracking_error: f64,
    pub termination: Termination,
    pub control_steps: u64,
    pub mean_reward: f64,
}

/// Full record of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<LogRow>,
    pub metrics: Metrics,
}

impl Trajectory {
    /// The motor target of every control step, in order.
    pub fn actions(&self, decimation: usize) -> Vec<Vector3<f64>> {
        self.rows.iter().step_by(decimation).map(|r| r.record.action).collect()
    }
}

/// Builds the controller named by `spec`.
pub fn make_controller(cfg: &HopperConfig, spec: &ControllerSpec) -> Result<Box<dyn Controller>, Error> {
    Ok(match spec {
        ControllerSpec::Raibert => Box::new(RaibertController::new(cfg)?),
        ControllerSpec::Policy { weights } => Box::new(PolicyRuntime::from_file(weights)?),
    })
}

pub fn run_episode(cfg: &HopperConfig, spec: &EpisodeSpec) -> Result<Trajectory, Error> {
    let mut controller = make_controller(cfg, &spec.controller)?;
    run_with(cfg, &spec.env, controller.as_mut())
}

/// Runs an episode with an arbitrary controller until it terminates.
pub fn run_with(cfg: &HopperConfig, opts: &EnvOptions, controller: &mut dyn Controller) -> Result<Trajectory, Error> {
    let mut env = Env::new(cfg, opts.clone())?;
    let start = env.state().body.pos;
    let mut rows = Vec::with_capacity((opts.horizon / cfg.sim.dt).ceil() as usize + 1);
    let mut reward_sum = 0.0;
    let mut steps = 0u64;
    let termination = loop {
        let action = controller.act(&env)?;
        let tr = env.step(&action)?;
        steps += 1;
        reward_sum += tr.reward.total;
        rows.extend(tr.records.iter().map(|&record| LogRow {
            record,
            reward: tr.reward.total,
        }));
        if let Some(t) = tr.termination {
            break t;
        }
    };
    let surviving_time = match termination {
        Termination::Horizon => opts.horizon,
        _ => env.time(),
    };
    let position_tracking_error = tracking_error(&rows, &start, &opts.command.v_d);
    Ok(Trajectory {
        rows,
        metrics: Metrics {
            surviving_time,
            position_tracking_error,
            termination,
            control_steps: steps,
            mean_reward: if steps > 0 { reward_sum / steps as f64 } else { 0.0 },
        },
    })
}

/// Mean squared horizontal deviation from `start + v_d t`.
pub fn tracking_error(rows: &[LogRow], start: &Vector3<f64>, v_d: &Vector2<f64>) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let sum: f64 = rows
        .iter()
        .map(|r| {
            let p = r.record.body.pos;
            let t = r.record.t;
            (Vector2::new(p.x - start.x, p.y - start.y) - v_d * t).norm_squared()
        })
        .sum();
    sum / rows.len() as f64
}
