use nalgebra::Vector3;

use hoplab::control::Command;
use hoplab::rollout::{run_episode, write_log, ControllerSpec, EnvOptions, EpisodeSpec, Termination};
use hoplab::HopperConfig;

fn raibert(env: EnvOptions) -> EpisodeSpec {
    EpisodeSpec {
        controller: ControllerSpec::Raibert,
        env,
    }
}

#[test]
fn ten_second_flat_episode_logs_5000_rows() {
    let cfg = HopperConfig::default();
    let spec = raibert(EnvOptions::new(0, Command::default(), 10.0));
    let tr = run_episode(&cfg, &spec).unwrap();
    assert_eq!(tr.rows.len(), 5000);
    assert_eq!(tr.metrics.termination, Termination::Horizon);
    assert_eq!(tr.metrics.surviving_time, 10.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    write_log(&path, &cfg, &spec, &tr).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 5001);
}

#[test]
fn forward_hop_with_push_at_5_7_s_runs_to_completion() {
    let mut env = EnvOptions::new(0, Command::new(0.2, 0.0, 0.4).unwrap(), 10.0);
    env.perturbations = vec![(5.7, Vector3::new(0.0, 0.4, 0.0))];
    let tr = run_episode(&HopperConfig::default(), &raibert(env)).unwrap();
    assert_eq!(tr.metrics.termination, Termination::Horizon);
}

#[test]
fn lateral_hop_at_0_38_s_period_runs_to_completion() {
    let env = EnvOptions::new(0, Command::new(0.0, 0.2, 0.38).unwrap(), 10.0);
    let tr = run_episode(&HopperConfig::default(), &raibert(env)).unwrap();
    assert_eq!(tr.metrics.termination, Termination::Horizon);
    let (a, b) = (tr.rows[0].record.body.pos, tr.rows.last().unwrap().record.body.pos);
    assert!((b.y - a.y) > 1.0, "travelled {} m along y", b.y - a.y);
}
