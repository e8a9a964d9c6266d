use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use hoplab::config::CONFIG_ENV;
use hoplab::control::Command;
use hoplab::conversion::ConversionMode;
use hoplab::geometry::{ik_serial, FootPosition};
use hoplab::rollout::{
    replay, run_checks, run_episode, serve_stdio, serve_tcp, write_log, ControllerSpec, EnvOptions, EpisodeSpec,
    ServeOptions,
};
use hoplab::sim::Terrain;
use hoplab::{Error, HopperConfig};

#[derive(Parser)]
#[command(name = "hoplab", version, about = "Parallel-leg hopper simulation and control")]
struct Cli {
    /// TOML configuration; defaults apply to omitted keys.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerKind {
    Raibert,
    Policy,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one episode and print its metrics as JSON.
    Sim {
        #[arg(long, value_enum, default_value = "raibert")]
        controller: ControllerKind,
        /// Policy weights file, required with `--controller policy`.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// `flat` or `slope:DEG`.
        #[arg(long, default_value = "flat")]
        terrain: Terrain,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        vx: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        vy: f64,
        /// Hop period, s.
        #[arg(long, default_value_t = 0.4)]
        period: f64,
        /// Episode length, s; the configured horizon when omitted.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `torque` or `joint-target`.
        #[arg(long, default_value = "torque")]
        conversion: ConversionMode,
        /// Sample body mass, friction, contact stiffness and gains from the seed.
        #[arg(long)]
        randomize: bool,
        /// Write the CSV log here, plus a `.meta.json` sidecar.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Serve the trainer protocol on stdio or a localhost TCP port.
    Serve {
        #[arg(long, conflicts_with = "port")]
        stdio: bool,
        #[arg(long, required_unless_present = "stdio")]
        port: Option<u16>,
        /// Idle timeout, s.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
    },
    /// Run property-check suites and print a JSON report.
    Check {
        /// One of config, kinematics, jacobian, virtual_work, ballistic,
        /// conversion, determinism, hopping, recovery; all when omitted.
        suite: Option<String>,
    },
    /// Kinematics of the parallel leg.
    Kin {
        #[command(subcommand)]
        op: KinOp,
    },
    /// Re-simulate a CSV log and compare it byte for byte.
    Replay { path: PathBuf },
}

#[derive(Subcommand)]
enum KinOp {
    /// Motor angles (rad) to foot position and template joints.
    Fk {
        #[arg(allow_hyphen_values = true, num_args = 3)]
        q: Vec<f64>,
    },
    /// Foot position (m) to motor angles and template joints.
    Ik {
        #[arg(allow_hyphen_values = true, num_args = 3)]
        x: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    let written = serde_json::to_writer_pretty(&mut out, v)
        .map_err(Error::from)
        .and_then(|_| writeln!(out).map_err(Error::from));
    match written {
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(Error::Json(e)) if e.io_error_kind() == Some(std::io::ErrorKind::BrokenPipe) => Ok(()),
        other => other,
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let config = cli.config.as_deref();
    match cli.cmd {
        Cmd::Check { suite } => {
            let report = run_checks(HopperConfig::load(config), suite.as_deref())?;
            print_json(&report)?;
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Sim {
            controller,
            weights,
            terrain,
            vx,
            vy,
            period,
            duration,
            seed,
            conversion,
            randomize,
            log,
        } => {
            let cfg = HopperConfig::load(config)?;
            let controller = match (controller, weights) {
                (ControllerKind::Raibert, _) => ControllerSpec::Raibert,
                (ControllerKind::Policy, Some(weights)) => ControllerSpec::Policy { weights },
                (ControllerKind::Policy, None) => {
                    return Err(Error::Episode("--controller policy needs --weights".into()))
                }
            };
            let mut env = EnvOptions::new(
                seed,
                Command::new(vx, vy, period)?,
                duration.unwrap_or(cfg.episode.horizon),
            );
            env.terrain = terrain;
            env.mode = conversion;
            env.randomize = randomize;
            let spec = EpisodeSpec { controller, env };
            let traj = run_episode(&cfg, &spec)?;
            if let Some(path) = log {
                write_log(&path, &cfg, &spec, &traj)?;
            }
            print_json(&traj.metrics)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Serve { stdio, port, timeout } => {
            let cfg = HopperConfig::load(config)?;
            if !(timeout.is_finite() && timeout > 0.0) {
                return Err(Error::Episode("--timeout must be positive".into()));
            }
            let opts = ServeOptions {
                idle_timeout: Duration::from_secs_f64(timeout),
            };
            let ended = match (stdio, port) {
                (true, _) => serve_stdio(&cfg, opts)?,
                (false, Some(port)) => serve_tcp(&cfg, port, opts)?,
                (false, None) => unreachable!("clap requires --stdio or --port"),
            };
            eprintln!("connection ended: {ended:?}");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Kin { op } => {
            let cfg = HopperConfig::load(config)?;
            let geom = cfg.chain_geometry()?;
            let serial = cfg.limits.serial();
            let (q, x) = match op {
                KinOp::Fk { q } => {
                    let q = Vector3::new(q[0], q[1], q[2]);
                    (q, geom.fk_parallel(&q)?)
                }
                KinOp::Ik { x } => {
                    let x = FootPosition::new(x[0], x[1], x[2]);
                    (geom.ik_parallel(&x)?, x)
                }
            };
            let qs = ik_serial(&x, &serial)?;
            print_json(&serde_json::json!({
                "motor_q": [q.x, q.y, q.z],
                "foot": [x.0.x, x.0.y, x.0.z],
                "serial_q": { "roll": qs.x, "pitch": qs.y, "ext": qs.z },
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Replay { path } => {
            let report = replay(&path)?;
            print_json(&report)?;
            Ok(if report.identical() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
