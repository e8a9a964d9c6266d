//! Acceptance criteria for the primary modules, one pass/fail line each.
//!
//! Metrics are computed here from the public primitives rather than through
//! the `check` suites, so the two act as cross-checks of each other.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use hoplab::control::Command;
use hoplab::conversion::{ActuationPipeline, ConversionMode, JointTorques, MatchedPose, Parallel};
use hoplab::geometry::{fk_serial, ik_serial, jacobian_serial, wrap_angle, ChainGeometry, SerialJointState};
use hoplab::rollout::{replay, run_episode, write_log, ControllerSpec, EnvOptions, EpisodeSpec, LogRow, Session};
use hoplab::sim::{Simulator, Terrain};
use hoplab::HopperConfig;

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        summary: summary.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn in_workspace_q(geom: &ChainGeometry, cfg: &HopperConfig, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let limits = cfg.limits.parallel();
    loop {
        let q = Vector3::new(
            rng.random_range(limits.q.min..limits.q.max),
            rng.random_range(limits.q.min..limits.q.max),
            rng.random_range(limits.q.min..limits.q.max),
        );
        if geom.in_workspace(&q, &limits) {
            return q;
        }
    }
}

/// Motor angles in the workspace whose foot the serial template also reaches.
fn matched_q(geom: &ChainGeometry, cfg: &HopperConfig, rng: &mut ChaCha8Rng) -> (Vector3<f64>, Vector3<f64>) {
    loop {
        let q = in_workspace_q(geom, cfg, rng);
        if let Ok(qs) = ik_serial(&geom.fk_parallel(&q).unwrap(), &cfg.limits.serial()) {
            return (q, qs);
        }
    }
}

fn central_difference(f: impl Fn(&Vector3<f64>) -> Vector3<f64>, q: &Vector3<f64>) -> Matrix3<f64> {
    let h = 1e-6;
    Matrix3::from_columns(&[0, 1, 2].map(|k| {
        let e = Vector3::ith(k, h);
        (f(&(q + e)) - f(&(q - e))) / (2.0 * h)
    }))
}

fn kinematics_roundtrip(cfg: &HopperConfig, geom: &ChainGeometry) -> Outcome {
    let mut rng = rng(1);
    let d2 = geom.lower_link().powi(2);
    let start = Instant::now();
    let (mut err, mut residual) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let q = in_workspace_q(geom, cfg, &mut rng);
        let x = geom.fk_parallel(&q).expect("fk inside the workspace").0;
        for i in 0..3 {
            residual = residual.max(((x - geom.knee_position(i, q[i])).norm_squared() - d2).abs());
        }
        let back = geom
            .ik_parallel(&hoplab::geometry::FootPosition(x))
            .expect("ik of a reachable foot");
        for i in 0..3 {
            err = err.max(wrap_angle(back[i] - q[i]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err < 1e-9 && residual < 1e-10 && secs < 5.0,
        format!("max error {err:.1e} rad, residual {residual:.1e} m^2, {secs:.2} s (limits 1e-9, 1e-10, 5 s)"),
    )
}

fn jacobians(cfg: &HopperConfig, geom: &ChainGeometry) -> Outcome {
    let mut rng = rng(2);
    let serial = cfg.limits.serial();
    let rel = |a: &Matrix3<f64>, b: &Matrix3<f64>| (a - b).norm() / b.norm();
    let (mut ep, mut es) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = in_workspace_q(geom, cfg, &mut rng);
        let fd = central_difference(|q| geom.fk_parallel(q).unwrap().0, &q);
        ep = ep.max(rel(&geom.jacobian_parallel(&q).unwrap(), &fd));
        let qs = Vector3::from_fn(|i, _| {
            let r = serial.range(i);
            rng.random_range(r.min..r.max)
        });
        es = es.max(rel(&jacobian_serial(&qs), &central_difference(|q| fk_serial(q).0, &qs)));
    }
    outcome(
        ep < 1e-5 && es < 1e-5,
        format!("relative error parallel {ep:.1e}, serial {es:.1e} (limit 1e-5)"),
    )
}

fn virtual_work(cfg: &HopperConfig, geom: &ChainGeometry) -> Outcome {
    let mut rng = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (q, qs) = matched_q(geom, cfg, &mut rng);
        let pose = MatchedPose::new(geom, &qs).unwrap();
        let tp = JointTorques::<Parallel>::new(Vector3::from_fn(|_, _| rng.random_range(-12.0..12.0)));
        let qd_s = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        // motor rates from the foot velocity, independently of the pose's own map
        let xd = jacobian_serial(&qs) * qd_s;
        let qd_p = geom.jacobian_parallel(&q).unwrap().try_inverse().unwrap() * xd;
        let p_parallel = tp.tau.dot(&qd_p);
        let p_serial = pose.parallel_to_serial(&tp).tau.dot(&qd_s);
        worst = worst.max((p_serial - p_parallel).abs() / (p_parallel.abs() + 1e-12));
    }
    outcome(
        worst < 1e-10,
        format!("max relative power mismatch {worst:.1e} (limit 1e-10)"),
    )
}

fn ballistic(cfg: &HopperConfig, geom: &ChainGeometry) -> Outcome {
    let (mut sim, _) = Simulator::reset(cfg, geom, 0, Terrain::Flat, false).unwrap();
    let mut s = *sim.state();
    let (p0, v0) = (Vector3::new(-0.3, 0.2, 3.0), Vector3::new(0.5, 0.2, 0.8));
    s.body.pos = p0;
    s.body.lin_vel = v0;
    s.body.ang_vel = Vector3::new(-0.5, 0.9, 0.3);
    sim.set_state(s);
    let (dt, g) = (cfg.sim.dt, cfg.sim.gravity);
    let steps = (0.3 / dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 1..=steps {
        sim.step(&JointTorques::zeros()).unwrap();
        let t = k as f64 * dt;
        let exact = p0 + v0 * t - Vector3::z() * (0.5 * g * t * t);
        worst = worst.max((sim.state().body.pos - exact).norm());
    }
    outcome(
        worst < 1e-4,
        format!("max deviation {worst:.1e} m over {steps} steps of {dt} s (limit 1e-4 m)"),
    )
}

fn episode(seed: u64, v_d: Vector2<f64>, horizon: f64, push: Option<(f64, Vector3<f64>)>) -> EpisodeSpec {
    let mut env = EnvOptions::new(seed, Command::new(v_d.x, v_d.y, 0.4).unwrap(), horizon);
    env.randomize = true;
    env.perturbations = push.into_iter().collect();
    EpisodeSpec {
        controller: ControllerSpec::Raibert,
        env,
    }
}

/// Longest run of consecutive touchdowns within `tol` periods of a scheduled stance start.
fn longest_scheduled_run(rows: &[LogRow], period: f64, tol: f64) -> usize {
    let (mut best, mut run) = (0, 0);
    for w in rows.windows(2) {
        if !w[1].record.in_contact || w[0].record.in_contact {
            continue;
        }
        let cycles = w[1].record.t / period;
        if (cycles - cycles.round()).abs() <= tol {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

fn baseline_hopping(cfg: &HopperConfig) -> Outcome {
    let mut ok = 0;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let tr = run_episode(cfg, &episode(seed, Vector2::zeros(), 10.0, None)).unwrap();
        let survived = tr.metrics.surviving_time >= 10.0 - 1e-9;
        let hops = longest_scheduled_run(&tr.rows, 0.4, 0.3);
        let (a, b) = (tr.rows[0].record.body.pos, tr.rows.last().unwrap().record.body.pos);
        let drift = (b.xy() - a.xy()).norm();
        if survived && hops >= 20 && drift < 0.5 {
            ok += 1;
        }
        parts.push(format!("{hops} hops/{drift:.3} m"));
    }
    outcome(
        ok == 5,
        format!("{ok}/5 seeds [{}] (need >= 20 hops, drift < 0.5 m)", parts.join(", ")),
    )
}

/// Heading-frame velocity averaged over the trailing `window` at row `i`.
fn windowed_velocity(rows: &[LogRow], i: usize, window: f64) -> Vector2<f64> {
    let now = &rows[i].record;
    let j = rows.partition_point(|r| r.record.t <= now.t - window + 1e-9) - 1;
    let past = &rows[j].record;
    let d = now.body.pos - past.body.pos;
    let yaw = now.body.rpy().z;
    let (s, c) = yaw.sin_cos();
    Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y) / (now.t - past.t)
}

fn perturbation_recovery(cfg: &HopperConfig) -> Outcome {
    let (v_d, t_push, window) = (Vector2::new(0.2, 0.0), 5.7, 0.4);
    let mut ok = 0;
    let mut times = Vec::new();
    for seed in 0..5 {
        let tr = run_episode(
            cfg,
            &episode(seed, v_d, 10.0, Some((t_push, Vector3::new(0.0, 0.4, 0.0)))),
        )
        .unwrap();
        let survived = tr.metrics.surviving_time >= 10.0 - 1e-9;
        let decimation = cfg.sim.control_decimation as usize;
        let mut since: Option<f64> = None;
        for i in (0..tr.rows.len()).step_by(decimation) {
            let t = tr.rows[i].record.t;
            if t < t_push + window {
                continue;
            }
            if (windowed_velocity(&tr.rows, i, window) - v_d).norm() < 0.1 {
                since.get_or_insert(t - t_push);
            } else {
                since = None;
            }
        }
        let t = since.filter(|_| survived);
        if t.is_some_and(|t| t <= 2.5) {
            ok += 1;
        }
        times.push(t.map_or("-".into(), |t| format!("{t:.2}")));
    }
    outcome(
        ok >= 4,
        format!(
            "{ok}/5 seeds recovered, times [{}] s (need 4 within 2.5 s)",
            times.join(", ")
        ),
    )
}

fn conversion_distinction(cfg: &HopperConfig, geom: &ChainGeometry) -> Outcome {
    let tr = run_episode(cfg, &episode(0, Vector2::new(0.2, 0.0), 4.0, None)).unwrap();
    let pipe = |mode| ActuationPipeline::from_config(geom, &cfg.actuation, cfg.limits.serial(), mode).unwrap();
    let (torque, joint) = (
        pipe(ConversionMode::TorqueMapping),
        pipe(ConversionMode::JointTargetMapping),
    );
    let (mut poses, mut distinct) = (0, 0);
    for row in &tr.rows {
        let m = &row.record.motor;
        let Ok(x) = geom.fk_parallel(&m.q) else { continue };
        let Ok(q) = ik_serial(&x, &cfg.limits.serial()) else {
            continue;
        };
        if q.x.abs() < 1e-3 && q.y.abs() < 1e-3 {
            continue;
        }
        let xd = geom.jacobian_parallel(&m.q).unwrap() * m.qd;
        let s = SerialJointState {
            q,
            qd: jacobian_serial(&q).try_inverse().unwrap() * xd,
        };
        let target = &row.record.action;
        let (Ok(a), Ok(b)) = (torque.actuate(geom, target, &s), joint.actuate(geom, target, &s)) else {
            continue;
        };
        poses += 1;
        let (a, b) = (a.tau_serial.tau, b.tau_serial.tau);
        if (0..3).any(|j| (a[j] - b[j]).abs() > 0.01 * a[j].abs().max(b[j].abs())) {
            distinct += 1;
        }
    }
    let share = distinct as f64 / poses.max(1) as f64;
    outcome(
        poses > 0 && share >= 0.9,
        format!(
            "{distinct}/{poses} asymmetric poses differ by > 1% ({:.1}%, need 90%)",
            100.0 * share
        ),
    )
}

fn determinism(cfg: &HopperConfig) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = episode(
        8,
        Vector2::new(0.1, -0.15),
        3.0,
        Some((1.2, Vector3::new(0.2, 0.1, 0.0))),
    );
    let path = dir.path().join("run.csv");
    let tr = run_episode(cfg, &spec).unwrap();
    write_log(&path, cfg, &spec, &tr).unwrap();
    let r = replay(&path).unwrap();

    // the first server is driven live, resetting whenever an episode ends
    let mut rng = rng(4);
    let reset = |seed: u64| {
        json!({"type": "reset", "seed": seed, "vx": 0.1, "vy": -0.15, "randomize": true, "perturbations": [[0.6, [0.2, 0.1, 0.0]]]})
            .to_string()
    };
    let mut first = Session::new(cfg.clone());
    let mut requests = vec![json!({"type": "hello", "version": 1}).to_string(), reset(8)];
    let mut responses: Vec<String> = requests.iter().map(|l| first.handle_line(l).0.to_json()).collect();
    let (mut transitions, mut episodes) = (0, 1);
    while transitions < 500 {
        let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
        requests.push(json!({"type": "step", "action": a}).to_string());
        let resp = first.handle_line(requests.last().unwrap()).0.to_json();
        transitions += 1;
        let done = serde_json::from_str::<serde_json::Value>(&resp).unwrap()["done"] == true;
        responses.push(resp);
        if done {
            requests.push(reset(8 + episodes));
            responses.push(first.handle_line(requests.last().unwrap()).0.to_json());
            episodes += 1;
        }
    }
    let mut second = Session::new(cfg.clone());
    let mismatch = requests
        .iter()
        .zip(&responses)
        .position(|(req, resp)| second.handle_line(req).0.to_json() != *resp);
    outcome(
        r.identical() && mismatch.is_none(),
        format!(
            "replay of {} rows {}; second server {} over {transitions} transitions in {episodes} episodes",
            r.rows,
            if r.identical() { "bit-identical" } else { "differs" },
            match mismatch {
                None => "agrees".to_string(),
                Some(i) => format!("diverges at response {i}"),
            }
        ),
    )
}

fn main() -> ExitCode {
    let cfg = HopperConfig::default();
    let geom = cfg.chain_geometry().unwrap();
    let criteria: [(&str, &dyn Fn() -> Outcome); 8] = [
        ("kinematics roundtrip", &|| kinematics_roundtrip(&cfg, &geom)),
        ("jacobian correctness", &|| jacobians(&cfg, &geom)),
        ("virtual-work conservation", &|| virtual_work(&cfg, &geom)),
        ("ballistic oracle", &|| ballistic(&cfg, &geom)),
        ("baseline hopping", &|| baseline_hopping(&cfg)),
        ("perturbation recovery", &|| perturbation_recovery(&cfg)),
        ("conversion-mode distinction", &|| conversion_distinction(&cfg, &geom)),
        ("determinism", &|| determinism(&cfg)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        failed += usize::from(!o.passed);
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.summary);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
