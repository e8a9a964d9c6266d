use std::time::Instant;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::env::EnvOptions;
use super::episode::{run_episode, ControllerSpec, EpisodeSpec, LogRow};
use super::log::{replay_bytes, write_csv, LogMeta};
use super::protocol::Session;
use crate::config::HopperConfig;
use crate::control::Command;
use crate::conversion::{ActuationPipeline, ConversionMode, JointTorques, MatchedPose, Parallel};
use crate::error::{ConfigError, Error};
use crate::geometry::{
    fk_serial, ik_serial, jacobian_serial, wrap_angle, ChainGeometry, FootPosition, ParallelJointState,
    SerialJointState,
};
use crate::sim::{Simulator, Terrain};

/// Suite names accepted by [`run_checks`], in run order.
pub const SUITES: [&str; 9] = [
    "config",
    "kinematics",
    "jacobian",
    "virtual_work",
    "ballistic",
    "conversion",
    "determinism",
    "hopping",
    "recovery",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured value compared against `limit`.
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl CheckResult {
    fn below(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: value < limit,
            value,
            limit,
            detail: detail.into(),
        }
    }

    fn at_least(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: value >= limit,
            value,
            limit,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            limit: f64::NAN,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub elapsed_s: f64,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Runs `suite`, or every suite when `None`. An invalid configuration is
/// reported by the `config` suite and the remaining suites are skipped.
pub fn run_checks(cfg: Result<HopperConfig, ConfigError>, suite: Option<&str>) -> Result<CheckReport, Error> {
    let names: Vec<&str> = match suite {
        Some(name) if SUITES.contains(&name) => vec![name],
        Some(name) => {
            return Err(Error::Episode(format!(
                "unknown check suite `{name}` (expected one of {})",
                SUITES.join(", ")
            )))
        }
        None => SUITES.to_vec(),
    };
    let mut suites = Vec::new();
    let cfg = match cfg.and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            suites.push(SuiteReport {
                suite: "config".into(),
                passed: false,
                elapsed_s: 0.0,
                checks: vec![CheckResult::failed("config_valid", e.to_string())],
            });
            return Ok(CheckReport { passed: false, suites });
        }
    };
    for name in names {
        let start = Instant::now();
        let checks = match name {
            "config" => vec![CheckResult {
                name: "config_valid".into(),
                passed: true,
                value: 1.0,
                limit: 1.0,
                detail: String::new(),
            }],
            "kinematics" => kinematics(&cfg, 10_000),
            "jacobian" => jacobian(&cfg, 1_000),
            "virtual_work" => virtual_work(&cfg, 1_000),
            "ballistic" => ballistic(&cfg),
            "conversion" => conversion(&cfg),
            "determinism" => determinism(&cfg),
            "hopping" => hopping(&cfg),
            "recovery" => recovery(&cfg),
            _ => unreachable!(),
        };
        suites.push(SuiteReport {
            suite: name.into(),
            passed: checks.iter().all(|c| c.passed),
            elapsed_s: start.elapsed().as_secs_f64(),
            checks,
        });
    }
    Ok(CheckReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed)
}

/// Draws motor angles uniformly from the joint limits until one lies in
/// the knee-out workspace.
pub fn sample_workspace<R: Rng>(geom: &ChainGeometry, cfg: &HopperConfig, rng: &mut R) -> Vector3<f64> {
    let limits = cfg.limits.parallel();
    loop {
        let q = Vector3::from_fn(|_, _| rng.random_range(limits.q.min..=limits.q.max));
        if geom.in_workspace(&q, &limits) {
            return q;
        }
    }
}

/// Largest `| |x - k_i|^2 - d^2 |` over the chains.
pub fn constraint_residual(geom: &ChainGeometry, q: &Vector3<f64>, x: &Vector3<f64>) -> f64 {
    let d2 = geom.lower_link() * geom.lower_link();
    (0..3)
        .map(|i| ((x - geom.knee_position(i, q[i])).norm_squared() - d2).abs())
        .fold(0.0, f64::max)
}

fn kinematics(cfg: &HopperConfig, n: usize) -> Vec<CheckResult> {
    let geom = match cfg.chain_geometry() {
        Ok(g) => g,
        Err(e) => return vec![CheckResult::failed("geometry", e.to_string())],
    };
    let mut rng = rng();
    let start = Instant::now();
    let (mut err, mut residual, mut failures) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..n {
        let q = sample_workspace(&geom, cfg, &mut rng);
        let Ok(x) = geom.fk_parallel(&q) else {
            failures += 1;
            continue;
        };
        residual = residual.max(constraint_residual(&geom, &q, &x.0));
        match geom.ik_parallel(&x) {
            Ok(back) => {
                let e = (0..3).map(|i| wrap_angle(back[i] - q[i]).abs()).fold(0.0, f64::max);
                err = err.max(e);
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed().as_secs_f64();

    let serial = cfg.limits.serial();
    let mut serial_err = 0.0f64;
    for _ in 0..n {
        let q = Vector3::from_fn(|i, _| {
            let r = serial.range(i);
            rng.random_range(r.min..=r.max)
        });
        match ik_serial(&fk_serial(&q), &serial) {
            Ok(back) => serial_err = serial_err.max((back - q).amax()),
            Err(_) => failures += 1,
        }
    }
    vec![
        CheckResult::below("parallel_roundtrip_rad", err, 1e-9, format!("{n} samples")),
        CheckResult::below("constraint_residual_m2", residual, 1e-10, ""),
        CheckResult::below("roundtrip_seconds", elapsed, 5.0, ""),
        CheckResult::below("serial_roundtrip", serial_err, 1e-9, format!("{n} samples")),
        CheckResult::below("failures", failures as f64, 1.0, ""),
    ]
}

/// Central differences of `f` at `q` with step `h`.
pub fn finite_difference<F>(f: F, q: &Vector3<f64>, h: f64) -> Option<Matrix3<f64>>
where
    F: Fn(&Vector3<f64>) -> Option<Vector3<f64>>,
{
    let mut j = Matrix3::zeros();
    for k in 0..3 {
        let mut hi = *q;
        let mut lo = *q;
        hi[k] += h;
        lo[k] -= h;
        j.set_column(k, &((f(&hi)? - f(&lo)?) / (2.0 * h)));
    }
    Some(j)
}

fn relative_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn jacobian(cfg: &HopperConfig, n: usize) -> Vec<CheckResult> {
    let geom = match cfg.chain_geometry() {
        Ok(g) => g,
        Err(e) => return vec![CheckResult::failed("geometry", e.to_string())],
    };
    let mut rng = rng();
    let (mut ep, mut es, mut failures) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..n {
        let q = sample_workspace(&geom, cfg, &mut rng);
        let fd = finite_difference(|q| geom.fk_parallel(q).ok().map(|x| x.0), &q, 1e-6);
        match (geom.jacobian_parallel(&q), fd) {
            (Ok(j), Some(fd)) => ep = ep.max(relative_error(&j, &fd)),
            _ => failures += 1,
        }
        let Ok(qs) = ik_serial(
            &geom.fk_parallel(&q).unwrap_or(FootPosition::new(0.0, 0.0, -0.2)),
            &cfg.limits.serial(),
        ) else {
            failures += 1;
            continue;
        };
        let fd = finite_difference(|q| Some(fk_serial(q).0), &qs, 1e-6).expect("serial FK is total");
        es = es.max(relative_error(&jacobian_serial(&qs), &fd));
    }
    vec![
        CheckResult::below("parallel_rel_error", ep, 1e-5, format!("{n} samples")),
        CheckResult::below("serial_rel_error", es, 1e-5, format!("{n} samples")),
        CheckResult::below("failures", failures as f64, 1.0, ""),
    ]
}

fn virtual_work(cfg: &HopperConfig, n: usize) -> Vec<CheckResult> {
    let geom = match cfg.chain_geometry() {
        Ok(g) => g,
        Err(e) => return vec![CheckResult::failed("geometry", e.to_string())],
    };
    let mut rng = rng();
    let serial = cfg.limits.serial();
    let (mut worst, mut failures) = (0.0f64, 0usize);
    for _ in 0..n {
        let q = sample_workspace(&geom, cfg, &mut rng);
        let pose = geom
            .fk_parallel(&q)
            .and_then(|x| ik_serial(&x, &serial))
            .and_then(|qs| MatchedPose::new(&geom, &qs));
        let Ok(pose) = pose else {
            failures += 1;
            continue;
        };
        let tp = JointTorques::<Parallel>::new(Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0)));
        let qd_s = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let ts = pose.parallel_to_serial(&tp);
        let qd_p = pose.parallel_velocity(&qd_s);
        let p_parallel = tp.tau.dot(&qd_p);
        worst = worst.max((ts.tau.dot(&qd_s) - p_parallel).abs() / (p_parallel.abs() + 1e-12));
    }
    vec![
        CheckResult::below("power_rel_error", worst, 1e-10, format!("{n} samples")),
        CheckResult::below("failures", failures as f64, 1.0, ""),
    ]
}

fn ballistic(cfg: &HopperConfig) -> Vec<CheckResult> {
    let geom = match cfg.chain_geometry() {
        Ok(g) => g,
        Err(e) => return vec![CheckResult::failed("geometry", e.to_string())],
    };
    let (mut sim, _) = match Simulator::reset(cfg, &geom, 0, Terrain::Flat, false) {
        Ok(s) => s,
        Err(e) => return vec![CheckResult::failed("reset", e.to_string())],
    };
    let mut s = *sim.state();
    let p0 = Vector3::new(0.1, -0.2, 2.0);
    let v0 = Vector3::new(0.3, -0.1, 1.2);
    s.body.pos = p0;
    s.body.lin_vel = v0;
    s.body.ang_vel = Vector3::new(0.4, -0.7, 1.1);
    sim.set_state(s);
    let g = cfg.sim.gravity;
    let steps = (0.3 / cfg.sim.dt).round() as usize;
    let (mut pos_err, mut quat_err) = (0.0f64, 0.0f64);
    for k in 1..=steps {
        if let Err(e) = sim.step(&JointTorques::zeros()) {
            return vec![CheckResult::failed("flight", e.to_string())];
        }
        let t = k as f64 * cfg.sim.dt;
        let expected = p0 + v0 * t + Vector3::new(0.0, 0.0, -0.5 * g * t * t);
        pos_err = pos_err.max((sim.state().body.pos - expected).norm());
        quat_err = quat_err.max((sim.state().body.orient.quaternion().norm() - 1.0).abs());
    }
    vec![
        CheckResult::below("parabola_error_m", pos_err, 1e-4, format!("{steps} steps")),
        CheckResult::below("quaternion_norm_error", quat_err, 1e-12, ""),
    ]
}

/// Serial template state equivalent to a motor state.
pub fn serial_state(geom: &ChainGeometry, cfg: &HopperConfig, m: &ParallelJointState) -> Option<SerialJointState> {
    let x = geom.fk_parallel(&m.q).ok()?;
    let q = ik_serial(&x, &cfg.limits.serial()).ok()?;
    let xd = geom.jacobian_parallel(&m.q).ok()? * m.qd;
    let qd = jacobian_serial(&q).try_inverse()? * xd;
    Some(SerialJointState { q, qd })
}

/// Share of asymmetric poses of a hopping episode at which the two
/// conversion modes give template efforts differing by more than 1 % on
/// some joint.
pub fn conversion_distinction(cfg: &HopperConfig, rows: &[LogRow]) -> Result<(usize, usize), Error> {
    let geom = cfg.chain_geometry()?;
    let make = |mode| ActuationPipeline::from_config(&geom, &cfg.actuation, cfg.limits.serial(), mode);
    let torque = make(ConversionMode::TorqueMapping)?;
    let joint = make(ConversionMode::JointTargetMapping)?;
    let (mut poses, mut distinct) = (0usize, 0usize);
    for row in rows {
        let Some(s) = serial_state(&geom, cfg, &row.record.motor) else {
            continue;
        };
        if s.q.x.abs() < 1e-3 && s.q.y.abs() < 1e-3 {
            continue;
        }
        let (Ok(a), Ok(b)) = (
            torque.actuate(&geom, &row.record.action, &s),
            joint.actuate(&geom, &row.record.action, &s),
        ) else {
            continue;
        };
        poses += 1;
        let (ta, tb) = (a.tau_serial.tau, b.tau_serial.tau);
        if (0..3).any(|j| (ta[j] - tb[j]).abs() > 0.01 * ta[j].abs().max(tb[j].abs()).max(1e-9)) {
            distinct += 1;
        }
    }
    Ok((poses, distinct))
}

fn conversion(cfg: &HopperConfig) -> Vec<CheckResult> {
    let spec = EpisodeSpec {
        controller: ControllerSpec::Raibert,
        env: EnvOptions::new(0, Command::new(0.2, 0.0, 0.4).expect("valid command"), 4.0),
    };
    let result = run_episode(cfg, &spec).and_then(|tr| conversion_distinction(cfg, &tr.rows));
    match result {
        Ok((poses, distinct)) if poses > 0 => vec![CheckResult::at_least(
            "distinct_pose_share",
            distinct as f64 / poses as f64,
            0.9,
            format!("{distinct} of {poses} asymmetric poses"),
        )],
        Ok(_) => vec![CheckResult::failed(
            "distinct_pose_share",
            "no asymmetric poses sampled",
        )],
        Err(e) => vec![CheckResult::failed("distinct_pose_share", e.to_string())],
    }
}

fn determinism(cfg: &HopperConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut opts = EnvOptions::new(3, Command::new(0.2, 0.1, 0.4).expect("valid command"), 2.0);
    opts.randomize = true;
    opts.perturbations = vec![(1.0, Vector3::new(0.0, 0.3, 0.0))];
    let spec = EpisodeSpec {
        controller: ControllerSpec::Raibert,
        env: opts,
    };
    let logged = run_episode(cfg, &spec).and_then(|tr| {
        let mut csv = Vec::new();
        write_csv(&tr.rows, &mut csv)?;
        Ok((LogMeta::new(cfg, &spec, &tr), csv))
    });
    match logged.and_then(|(meta, csv)| replay_bytes(&meta, &csv)) {
        Ok(r) => out.push(CheckResult {
            name: "log_replay".into(),
            passed: r.identical(),
            value: r.first_mismatch.unwrap_or(0) as f64,
            limit: 0.0,
            detail: format!("{} rows replayed against {} logged", r.rows, r.logged_rows),
        }),
        Err(e) => out.push(CheckResult::failed("log_replay", e.to_string())),
    }

    let requests = protocol_script(&spec.env, 100);
    let run = || {
        let mut session = Session::new(cfg.clone());
        requests
            .iter()
            .map(|line| session.handle_line(line).0.to_json())
            .collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    let mismatch = a.iter().zip(&b).position(|(x, y)| x != y);
    out.push(CheckResult {
        name: "server_agreement".into(),
        passed: mismatch.is_none() && a.len() == b.len(),
        value: mismatch.map(|i| i as f64 + 1.0).unwrap_or(0.0),
        limit: 0.0,
        detail: format!("{} responses compared", a.len()),
    });
    out
}

/// A hello, a reset matching `opts`, and `steps` steps with a fixed
/// pseudo-random action stream.
pub fn protocol_script(opts: &EnvOptions, steps: usize) -> Vec<String> {
    let mut rng = rng();
    let mut lines = vec![
        r#"{"type":"hello","version":1}"#.to_string(),
        serde_json::json!({
            "type": "reset",
            "seed": opts.seed,
            "vx": opts.command.v_d.x,
            "vy": opts.command.v_d.y,
            "period": opts.command.period,
            "randomize": opts.randomize,
            "horizon": opts.horizon,
            "perturbations": opts.perturbations.iter().map(|(t, dv)| (*t, [dv.x, dv.y, dv.z])).collect::<Vec<_>>(),
        })
        .to_string(),
    ];
    for _ in 0..steps {
        let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.1..0.1));
        lines.push(serde_json::json!({"type": "step", "action": a}).to_string());
    }
    lines
}

/// Times of the physics rows at which the foot touches down.
pub fn touchdowns(rows: &[LogRow]) -> Vec<f64> {
    rows.windows(2)
        .filter(|w| w[1].record.in_contact && !w[0].record.in_contact)
        .map(|w| w[1].record.t)
        .collect()
}

/// Longest run of consecutive touchdowns that land within `tol` periods of
/// a scheduled stance start.
pub fn scheduled_hop_run(touchdowns: &[f64], period: f64, tol: f64) -> usize {
    let (mut best, mut run) = (0, 0);
    for t in touchdowns {
        let offset = (t / period - (t / period).round()).abs();
        if offset <= tol {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Time after `t_push` from which the heading-frame velocity averaged over
/// the trailing `window` stays within `tol` of `v_d` until the end of the
/// log, sampled once per control step.
pub fn recovery_time(
    rows: &[LogRow],
    v_d: &Vector2<f64>,
    t_push: f64,
    window: f64,
    tol: f64,
    decimation: usize,
) -> Option<f64> {
    let mut recovered: Option<f64> = None;
    for (i, r) in rows.iter().enumerate().step_by(decimation.max(1)) {
        let t = r.record.t;
        if t < t_push + window {
            continue;
        }
        let j = rows[..i].iter().rposition(|q| q.record.t <= t - window + 1e-9)?;
        let (a, b) = (rows[j].record.body.pos, r.record.body.pos);
        let (s, c) = r.record.body.rpy().z.sin_cos();
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let v = Vector2::new(c * dx + s * dy, -s * dx + c * dy) / (t - rows[j].record.t);
        if (v - v_d).norm() < tol {
            recovered.get_or_insert(t - t_push);
        } else {
            recovered = None;
        }
    }
    recovered
}

fn hopping(cfg: &HopperConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for seed in 0..5 {
        let mut opts = EnvOptions::new(seed, Command::default(), 10.0);
        opts.randomize = true;
        let spec = EpisodeSpec {
            controller: ControllerSpec::Raibert,
            env: opts,
        };
        match run_episode(cfg, &spec) {
            Ok(tr) => {
                let first = tr.rows.first().map(|r| r.record.body.pos).unwrap_or_default();
                let last = tr.rows.last().map(|r| r.record.body.pos).unwrap_or_default();
                let hops = scheduled_hop_run(&touchdowns(&tr.rows), 0.4, 0.3);
                let drift = (last.xy() - first.xy()).norm();
                let survived = tr.metrics.surviving_time >= 10.0 - 1e-9;
                out.push(CheckResult::at_least(
                    &format!("seed{seed}_scheduled_hops"),
                    if survived { hops as f64 } else { 0.0 },
                    20.0,
                    format!("termination {:?}", tr.metrics.termination),
                ));
                out.push(CheckResult::below(&format!("seed{seed}_drift_m"), drift, 0.5, ""));
            }
            Err(e) => out.push(CheckResult::failed(&format!("seed{seed}"), e.to_string())),
        }
    }
    out
}

fn recovery(cfg: &HopperConfig) -> Vec<CheckResult> {
    let v_d = Vector2::new(0.2, 0.0);
    let mut recovered = 0;
    let mut times = Vec::new();
    for seed in 0..5 {
        let mut opts = EnvOptions::new(seed, Command::new(v_d.x, v_d.y, 0.4).expect("valid command"), 10.0);
        opts.randomize = true;
        opts.perturbations = vec![(5.7, Vector3::new(0.0, 0.4, 0.0))];
        let spec = EpisodeSpec {
            controller: ControllerSpec::Raibert,
            env: opts,
        };
        let t = run_episode(cfg, &spec).ok().and_then(|tr| {
            if tr.metrics.surviving_time < 10.0 - 1e-9 {
                return None;
            }
            recovery_time(&tr.rows, &v_d, 5.7, 0.4, 0.1, cfg.sim.control_decimation as usize)
        });
        if t.is_some_and(|t| t <= 2.5) {
            recovered += 1;
        }
        times.push(t.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()));
    }
    vec![CheckResult::at_least(
        "seeds_recovered_within_2_5s",
        recovered as f64,
        4.0,
        format!("recovery times [{}] s", times.join(", ")),
    )]
}
