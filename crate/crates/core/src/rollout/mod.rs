//! Episode orchestration: environment stepping, episode runner, logs,
//! the trainer protocol and the property-check suites.

mod check;
mod env;
mod episode;
mod log;
mod protocol;

pub use check::{
    constraint_residual, conversion_distinction, finite_difference, protocol_script, recovery_time, run_checks,
    sample_workspace, scheduled_hop_run, serial_state, touchdowns, CheckReport, CheckResult, SuiteReport, SUITES,
};
pub use env::{Env, EnvOptions, PhysicsRecord, Privileged, Termination, Transition};
pub use episode::{
    make_controller, run_episode, run_with, tracking_error, ActionStream, Controller, ControllerSpec, EpisodeSpec,
    LogRow, Metrics, Trajectory,
};
pub use log::{
    meta_path, read_actions, read_meta, replay, replay_bytes, write_csv, write_log, LogMeta, ReplayReport, LOG_COLUMNS,
    LOG_FORMAT_VERSION,
};
pub use protocol::{
    serve_lines, serve_listener, serve_stdio, serve_tcp, After, Ended, ErrorCode, Request, ResetRequest, Response,
    ServeOptions, Session, PROTOCOL_VERSION,
};
