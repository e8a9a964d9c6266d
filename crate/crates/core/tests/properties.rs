use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use hoplab::config::HopperConfig;
use hoplab::control::weights::{Tensor, WeightsFile};
use hoplab::conversion::{pd_torque, JointTorques, MatchedPose, Parallel, PdGains, Serial};
use hoplab::geometry::{
    fk_serial, ik_serial, jacobian_serial, wrap_angle, ChainGeometry, FootPosition, ParallelJointState,
};
use hoplab::sim::{ContactModel, DynamicsParams, Simulator, Terrain};

fn cfg() -> HopperConfig {
    HopperConfig::default()
}

fn geom() -> ChainGeometry {
    cfg().chain_geometry().unwrap()
}

fn vec3(lo: f64, hi: f64) -> impl Strategy<Value = Vector3<f64>> {
    [lo..hi, lo..hi, lo..hi].prop_map(Vector3::from)
}

fn workspace_q() -> impl Strategy<Value = Vector3<f64>> {
    let limits = cfg().limits.parallel();
    vec3(limits.q.min, limits.q.max).prop_filter("inside the knee-out workspace", move |q| {
        geom().in_workspace(q, &limits)
    })
}

/// Template joints whose foot the parallel leg can reach.
fn matched_serial_q() -> impl Strategy<Value = Vector3<f64>> {
    workspace_q().prop_filter_map("template reaches the foot", |q| {
        let x = geom().fk_parallel(&q).ok()?;
        ik_serial(&x, &cfg().limits.serial()).ok()
    })
}

fn central_difference(f: impl Fn(&Vector3<f64>) -> Vector3<f64>, q: &Vector3<f64>) -> Matrix3<f64> {
    let h = 1e-6;
    Matrix3::from_columns(&[0, 1, 2].map(|k| {
        let e = Vector3::ith(k, h);
        (f(&(q + e)) - f(&(q - e))) / (2.0 * h)
    }))
}

fn rel(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parallel_fk_ik_roundtrip(q in workspace_q()) {
        let g = geom();
        let x = g.fk_parallel(&q).unwrap();
        let back = g.ik_parallel(&x).unwrap();
        for i in 0..3 {
            prop_assert!(wrap_angle(back[i] - q[i]).abs() < 1e-9, "{back} vs {q}");
        }
    }

    #[test]
    fn fk_foot_satisfies_every_loop_closure(q in workspace_q()) {
        let g = geom();
        let x = g.fk_parallel(&q).unwrap().0;
        let d2 = g.lower_link().powi(2);
        for i in 0..3 {
            let residual = (x - g.knee_position(i, q[i])).norm_squared() - d2;
            prop_assert!(residual.abs() < 1e-10, "chain {i}: {residual}");
        }
    }

    #[test]
    fn serial_fk_ik_roundtrip(r in -0.5f64..0.5, p in -0.5f64..0.5, e in 0.12f64..0.40) {
        let q = Vector3::new(r, p, e);
        let back = ik_serial(&fk_serial(&q), &cfg().limits.serial()).unwrap();
        prop_assert!((back - q).amax() < 1e-12);
        prop_assert!((fk_serial(&q).0.norm() - e).abs() < 1e-12);
    }

    #[test]
    fn parallel_jacobian_matches_finite_differences(q in workspace_q()) {
        let g = geom();
        let fd = central_difference(|q| g.fk_parallel(q).unwrap().0, &q);
        prop_assert!(rel(&g.jacobian_parallel(&q).unwrap(), &fd) < 1e-5);
    }

    #[test]
    fn serial_jacobian_matches_finite_differences(q in vec3(-0.5, 0.5).prop_map(|v| Vector3::new(v.x, v.y, 0.25 + 0.2 * v.z))) {
        let fd = central_difference(|q| fk_serial(q).0, &q);
        prop_assert!(rel(&jacobian_serial(&q), &fd) < 1e-5);
    }

    #[test]
    fn mapped_torques_do_equal_virtual_work(qs in matched_serial_q(), tp in vec3(-12.0, 12.0), qd in vec3(-5.0, 5.0)) {
        let pose = MatchedPose::new(&geom(), &qs).unwrap();
        let ts = pose.parallel_to_serial(&JointTorques::<Parallel>::new(tp));
        let qd_p = pose.parallel_velocity(&qd);
        let p_parallel = tp.dot(&qd_p);
        let p_serial = ts.tau.dot(&qd);
        prop_assert!((p_serial - p_parallel).abs() <= 1e-10 * (1.0 + p_parallel.abs()), "{p_serial} vs {p_parallel}");
    }

    #[test]
    fn parallel_velocity_matches_differentiated_pose_map(qs in matched_serial_q(), qd in vec3(-1.0, 1.0)) {
        let g = geom();
        let lim = cfg().limits.serial();
        let motor = |q: &Vector3<f64>| g.ik_parallel(&fk_serial(q)).unwrap();
        let h = 1e-6;
        let fd = (motor(&(qs + qd * h)) - motor(&(qs - qd * h))) / (2.0 * h);
        let pose = MatchedPose::new(&g, &qs).unwrap();
        let v = pose.parallel_velocity(&qd);
        prop_assert!((v - fd).norm() <= 1e-5 * (1.0 + fd.norm()), "{v} vs {fd}");
        prop_assert!(ik_serial(&FootPosition(pose.foot), &lim).is_ok());
    }

    #[test]
    fn torque_map_is_linear_and_invertible(qs in matched_serial_q(), a in vec3(-10.0, 10.0), b in vec3(-10.0, 10.0), s in -3.0f64..3.0) {
        let pose = MatchedPose::new(&geom(), &qs).unwrap();
        let f = |t: Vector3<f64>| pose.parallel_to_serial(&JointTorques::<Parallel>::new(t)).tau;
        let lhs = f(a * s + b);
        let rhs = f(a) * s + f(b);
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
        let back = pose.serial_to_parallel(&JointTorques::<Serial>::new(f(a))).unwrap().tau;
        prop_assert!((back - a).norm() <= 1e-8 * (1.0 + a.norm()));
    }

    #[test]
    fn clamp_never_flips_sign(t in vec3(-100.0, 100.0), lim in vec3(0.0, 50.0)) {
        let c = JointTorques::<Parallel>::new(t).clamped(&lim).tau;
        for i in 0..3 {
            prop_assert!(c[i].abs() <= lim[i]);
            prop_assert!(c[i] * t[i] >= 0.0);
            if t[i].abs() <= lim[i] {
                prop_assert_eq!(c[i], t[i]);
            }
        }
    }

    #[test]
    fn pd_law_is_odd_and_saturated(target in vec3(-1.0, 1.0), q in vec3(-1.0, 1.0), qd in vec3(-10.0, 10.0)) {
        let gains = PdGains::uniform(20.0, 0.5);
        let s = ParallelJointState { q, qd };
        let neg = ParallelJointState { q: -q, qd: -qd };
        let t = pd_torque(&target, &s, &gains, 12.0).tau;
        let u = pd_torque(&-target, &neg, &gains, 12.0).tau;
        prop_assert!((t + u).norm() < 1e-12);
        prop_assert!(t.amax() <= 12.0);
        let unsat = pd_torque(&target, &s, &gains, f64::INFINITY).tau;
        let expected = (target - q) * 20.0 - qd * 0.5;
        prop_assert!((unsat - expected).norm() < 1e-12);
    }

    #[test]
    fn friction_force_stays_in_cone(
        depth in 0.0f64..0.02,
        vel in vec3(-2.0, 2.0),
        offset in vec3(-0.05, 0.05),
        mu in 0.4f64..1.0,
        slope in -15.0f64..15.0,
    ) {
        let mut model = ContactModel::from(&cfg().contact);
        model.friction = mu;
        let terrain = Terrain::slope(slope);
        let n = terrain.normal();
        let foot = Vector3::new(0.1, 0.0, terrain.height(0.1, 0.0)) - n * depth;
        let mut anchor = Some(foot + offset - n * n.dot(&offset));
        let f = model.force(&foot, &vel, &terrain, &mut anchor);
        prop_assert!(f.normal_force >= 0.0);
        prop_assert!(f.tangential.dot(&n).abs() < 1e-9);
        prop_assert!(f.tangential.norm() <= mu * f.normal_force * (1.0 + 1e-12) + 1e-12);
        prop_assert!((f.force - (n * f.normal_force + f.tangential)).norm() < 1e-9);
    }

    #[test]
    fn flight_keeps_quaternion_unit_and_conserves_energy(
        v in vec3(-2.0, 2.0),
        w in vec3(-6.0, 6.0),
        z in 3.0f64..5.0,
    ) {
        let c = cfg();
        let g = geom();
        let (mut sim, _) = Simulator::reset(&c, &g, 0, Terrain::Flat, false).unwrap();
        let mut s = *sim.state();
        s.body.pos.z = z;
        s.body.lin_vel = v;
        s.body.ang_vel = w;
        sim.set_state(s);
        let m = sim.params().mass;
        let grav = c.sim.gravity;
        let translational = |sim: &Simulator| {
            let b = &sim.state().body;
            0.5 * m * b.lin_vel.norm_squared() + m * grav * b.pos.z
        };
        let e0 = translational(&sim);
        for _ in 0..200 {
            sim.step(&JointTorques::zeros()).unwrap();
            prop_assert!((sim.state().body.orient.quaternion().norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!(!sim.state().contact.in_contact);
        prop_assert!((translational(&sim) - e0).abs() < 1e-9 * e0.abs().max(1.0));
    }

    #[test]
    fn randomized_parameters_stay_in_range(seed in any::<u64>()) {
        use rand::SeedableRng;
        let c = cfg();
        let r = &c.randomization;
        let p = DynamicsParams::randomized(&c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mass_scale = p.mass / c.sim.body_mass;
        prop_assert!(r.mass_scale.contains(mass_scale));
        prop_assert!((p.inertia - c.body_inertia() * mass_scale).norm() < 1e-12);
        prop_assert!(r.friction.contains(p.contact.friction));
        prop_assert!(r.stiffness_scale.contains(p.contact.stiffness / c.contact.stiffness));
        prop_assert!(r.gain_scale.contains(p.gain_scale));
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&w));
        let turns = (a - w) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn weights_container_roundtrips(data in prop::collection::vec(-1e3f32..1e3, 1..64), rows in 1usize..4) {
        let cols = data.len().div_ceil(rows);
        let mut padded = data.clone();
        padded.resize(rows * cols, 0.5);
        let file = WeightsFile {
            tensors: vec![
                ("a.weight".into(), Tensor { shape: vec![rows, cols], data: padded }),
                ("a.bias".into(), Tensor { shape: vec![rows], data: vec![1.5; rows] }),
            ],
            activations: [("a".to_string(), "tanh".to_string())].into_iter().collect(),
            history: 5,
            obs_dim: 17,
            actor_inputs: vec!["obs".into()],
        };
        let back = WeightsFile::from_bytes(&file.to_bytes()).unwrap();
        prop_assert_eq!(back, file);
    }
}

fn flight_state(pos: Vector3<f64>, rpy: Vector3<f64>, vel: Vector3<f64>, w: Vector3<f64>) -> hoplab::sim::SimState {
    hoplab::sim::SimState {
        time: 0.0,
        body: hoplab::sim::BodyState {
            pos,
            orient: nalgebra::UnitQuaternion::from_euler_angles(rpy.x, rpy.y, rpy.z),
            lin_vel: vel,
            ang_vel: w,
        },
        leg: hoplab::geometry::SerialJointState::at_rest(Vector3::new(0.0, 0.0, 0.25)),
        contact: Default::default(),
    }
}

fn mirrored(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, -v.y, v.z)
}

proptest! {
    #[test]
    fn mirrored_state_mirrors_foot_target(
        rpy in vec3(-0.2, 0.2),
        vel in vec3(-0.6, 0.6),
        w in vec3(-1.0, 1.0),
        cmd in [-0.3..0.3f64, -0.3..0.3f64],
        progress in 0.0..0.5f64,
    ) {
        let cfg = cfg();
        let geom = geom();
        let pos = Vector3::new(0.1, 0.05, 0.45);
        let mut clock = hoplab::control::PhaseClock::new(0.4);
        clock.advance(0.2 + progress * 0.4);
        let run = |state: &hoplab::sim::SimState, vy: f64| {
            let mut ctl = hoplab::control::RaibertController::new(&cfg).unwrap();
            let command = hoplab::control::Command::new(cmd[0], vy, 0.4).unwrap();
            geom.fk_parallel(&ctl.target(state, &clock, &command)).unwrap().0
        };
        let a = run(&flight_state(pos, rpy, vel, w), cmd[1]);
        // axial vectors pick up the sign of the reflection
        let m_rpy = Vector3::new(-rpy.x, rpy.y, -rpy.z);
        let m_w = Vector3::new(-w.x, w.y, -w.z);
        let b = run(&flight_state(mirrored(&pos), m_rpy, mirrored(&vel), m_w), -cmd[1]);
        prop_assert!((a - mirrored(&b)).norm() < 1e-9, "{a} vs {b}");
    }
}
