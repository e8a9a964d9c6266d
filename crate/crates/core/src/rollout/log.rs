use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::env::EnvOptions;
use super::episode::{run_with, ActionStream, EpisodeSpec, LogRow, Metrics, Trajectory};
use crate::config::HopperConfig;
use crate::error::Error;

pub const LOG_FORMAT_VERSION: u32 = 1;

/// CSV column names with units, in file order.
pub const LOG_COLUMNS: [(&str, &str); 35] = [
    ("t", "s"),
    ("phase", "rad"),
    ("contact", "0/1"),
    ("reward", "-"),
    ("pos_x", "m"),
    ("pos_y", "m"),
    ("pos_z", "m"),
    ("quat_w", "-"),
    ("quat_x", "-"),
    ("quat_y", "-"),
    ("quat_z", "-"),
    ("vel_x", "m/s"),
    ("vel_y", "m/s"),
    ("vel_z", "m/s"),
    ("angvel_x", "rad/s"),
    ("angvel_y", "rad/s"),
    ("angvel_z", "rad/s"),
    ("motor_q0", "rad"),
    ("motor_q1", "rad"),
    ("motor_q2", "rad"),
    ("motor_qd0", "rad/s"),
    ("motor_qd1", "rad/s"),
    ("motor_qd2", "rad/s"),
    ("tau_p0", "Nm"),
    ("tau_p1", "Nm"),
    ("tau_p2", "Nm"),
    ("tau_s_roll", "Nm"),
    ("tau_s_pitch", "Nm"),
    ("tau_s_ext", "N"),
    ("action0", "rad"),
    ("action1", "rad"),
    ("action2", "rad"),
    ("roll", "rad"),
    ("pitch", "rad"),
    ("yaw", "rad"),
];

/// Sidecar written next to every CSV log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub format_version: u32,
    pub spec: EpisodeSpec,
    pub config: HopperConfig,
    pub metrics: Metrics,
    pub rows: usize,
    pub dt: f64,
    pub control_decimation: u32,
}

/// Path of the metadata sidecar for the CSV log at `csv`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn row_fields(row: &LogRow) -> [f64; 35] {
    let r = &row.record;
    let b = &r.body;
    let q = b.orient.quaternion();
    let rpy = b.rpy();
    [
        r.t,
        r.phase,
        if r.in_contact { 1.0 } else { 0.0 },
        row.reward,
        b.pos.x,
        b.pos.y,
        b.pos.z,
        q.w,
        q.i,
        q.j,
        q.k,
        b.lin_vel.x,
        b.lin_vel.y,
        b.lin_vel.z,
        b.ang_vel.x,
        b.ang_vel.y,
        b.ang_vel.z,
        r.motor.q.x,
        r.motor.q.y,
        r.motor.q.z,
        r.motor.qd.x,
        r.motor.qd.y,
        r.motor.qd.z,
        r.tau_parallel.tau.x,
        r.tau_parallel.tau.y,
        r.tau_parallel.tau.z,
        r.tau_serial.tau.x,
        r.tau_serial.tau.y,
        r.tau_serial.tau.z,
        r.action.x,
        r.action.y,
        r.action.z,
        rpy.x,
        rpy.y,
        rpy.z,
    ]
}

/// Writes `rows` as CSV. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_csv<W: Write>(rows: &[LogRow], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_COLUMNS.iter().map(|(name, _)| *name))?;
    for row in rows {
        w.write_record(row_fields(row).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

impl LogMeta {
    pub fn new(cfg: &HopperConfig, spec: &EpisodeSpec, traj: &Trajectory) -> Self {
        LogMeta {
            format_version: LOG_FORMAT_VERSION,
            spec: spec.clone(),
            config: cfg.clone(),
            metrics: traj.metrics.clone(),
            rows: traj.rows.len(),
            dt: cfg.sim.dt,
            control_decimation: cfg.sim.control_decimation,
        }
    }
}

/// Writes the CSV log to `csv` and its metadata sidecar.
pub fn write_log(csv: &Path, cfg: &HopperConfig, spec: &EpisodeSpec, traj: &Trajectory) -> Result<(), Error> {
    let mut out = std::io::BufWriter::new(fs::File::create(csv)?);
    write_csv(&traj.rows, &mut out)?;
    out.flush()?;
    let meta = LogMeta::new(cfg, spec, traj);
    fs::write(meta_path(csv), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_meta(csv: &Path) -> Result<LogMeta, Error> {
    let meta: LogMeta = serde_json::from_str(&fs::read_to_string(meta_path(csv))?)?;
    if meta.format_version != LOG_FORMAT_VERSION {
        return Err(Error::Episode(format!(
            "log format version {} is not supported (expected {LOG_FORMAT_VERSION})",
            meta.format_version
        )));
    }
    Ok(meta)
}

/// Motor targets of each control step, read from the action columns of
/// the first physics row of the step.
pub fn read_actions<R: std::io::Read>(csv: R, decimation: usize) -> Result<Vec<nalgebra::Vector3<f64>>, Error> {
    let mut r = csv::Reader::from_reader(csv);
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Episode(format!("log has no `{name}` column")))
    };
    let idx = [col("action0")?, col("action1")?, col("action2")?];
    let mut actions = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i % decimation != 0 {
            continue;
        }
        let mut a = nalgebra::Vector3::zeros();
        for (k, &j) in idx.iter().enumerate() {
            a[k] = rec[j]
                .parse()
                .map_err(|_| Error::Episode(format!("row {i}: bad number `{}`", &rec[j])))?;
        }
        actions.push(a);
    }
    Ok(actions)
}

/// Outcome of re-simulating a logged episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub rows: usize,
    pub logged_rows: usize,
    /// First data line (1-based, header excluded) that differs, if any.
    pub first_mismatch: Option<usize>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_mismatch.is_none() && self.rows == self.logged_rows
    }
}

/// Re-runs the episode described by the log at `csv` from its seed and
/// logged action stream and compares the output byte for byte.
pub fn replay(csv: &Path) -> Result<ReplayReport, Error> {
    replay_bytes(&read_meta(csv)?, &fs::read(csv)?)
}

/// [`replay`] for a log held in memory.
pub fn replay_bytes(meta: &LogMeta, csv: &[u8]) -> Result<ReplayReport, Error> {
    let actions = read_actions(csv, meta.control_decimation as usize)?;
    let opts: EnvOptions = meta.spec.env.clone();
    let traj = run_with(&meta.config, &opts, &mut ActionStream::new(actions))?;
    let mut fresh = Vec::new();
    write_csv(&traj.rows, &mut fresh)?;
    let fresh = String::from_utf8_lossy(&fresh);
    let logged = String::from_utf8_lossy(csv);
    let first_mismatch = fresh
        .lines()
        .zip(logged.lines())
        .skip(1)
        .position(|(a, b)| a != b)
        .map(|i| i + 1);
    Ok(ReplayReport {
        rows: traj.rows.len(),
        logged_rows: logged.lines().count().saturating_sub(1),
        first_mismatch,
    })
}
