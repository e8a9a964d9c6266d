use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::time::Duration;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::env::{Env, EnvOptions, Privileged, Termination};
use crate::config::HopperConfig;
use crate::control::{Command, RewardBreakdown, OBS_DIM};
use crate::conversion::ConversionMode;
use crate::error::Error;
use crate::sim::Terrain;

pub const PROTOCOL_VERSION: u32 = 1;

/// Machine-readable error codes carried by `error` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Line is not a JSON object with a known `type`, or fields are wrong.
    BadRequest,
    /// `hello` has not been exchanged yet.
    HelloRequired,
    /// `hello` asked for a different protocol version; the server closes.
    VersionMismatch,
    /// `reset` carried an invalid episode description.
    InvalidReset,
    /// `step` before any `reset`.
    NotReset,
    /// `step` after the episode ended; `reset` starts a new one.
    EpisodeDone,
    /// `step` action is not a list of 3 finite numbers.
    BadActionShape,
    /// The environment failed internally.
    Internal,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello {
        version: u32,
        #[serde(default)]
        client: Option<String>,
    },
    Reset(ResetRequest),
    Step {
        action: Value,
    },
    Close,
}

fn default_period() -> f64 {
    Command::default().period
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetRequest {
    pub seed: u64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub terrain: Terrain,
    #[serde(default)]
    pub mode: ConversionMode,
    #[serde(default)]
    pub randomize: bool,
    /// Episode length, s; the configured horizon when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub perturbations: Vec<(f64, [f64; 3])>,
}

impl ResetRequest {
    fn options(&self, cfg: &HopperConfig) -> Result<EnvOptions, Error> {
        let command = Command::new(self.vx, self.vy, self.period)?;
        let mut opts = EnvOptions::new(self.seed, command, self.horizon.unwrap_or(cfg.episode.horizon));
        opts.terrain = self.terrain;
        opts.mode = self.mode;
        opts.randomize = self.randomize;
        opts.perturbations = self
            .perturbations
            .iter()
            .map(|(t, dv)| (*t, Vector3::from(*dv)))
            .collect();
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Ready {
        version: u32,
        obs_dim: usize,
        action_dim: usize,
        control_dt: f64,
    },
    Obs {
        obs: Vec<f64>,
        t: f64,
        privileged: Privileged,
    },
    Transition {
        obs: Vec<f64>,
        reward: f64,
        reward_terms: RewardBreakdown,
        done: bool,
        termination: Option<Termination>,
        t: f64,
        privileged: Privileged,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl Response {
    /// Single-line JSON encoding.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("responses always serialize")
    }

    fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Response::Error {
            code,
            message: message.into(),
        }
    }
}

/// What the transport does after sending a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum After {
    Continue,
    Close,
}

/// Protocol state of one connection. Requests are handled strictly in
/// order; each yields exactly one response.
#[derive(Debug)]
pub struct Session {
    cfg: HopperConfig,
    greeted: bool,
    env: Option<Env>,
}

impl Session {
    pub fn new(cfg: HopperConfig) -> Self {
        Session {
            cfg,
            greeted: false,
            env: None,
        }
    }

    fn ready(&self) -> Response {
        Response::Ready {
            version: PROTOCOL_VERSION,
            obs_dim: OBS_DIM,
            action_dim: 3,
            control_dt: self.cfg.sim.control_period(),
        }
    }

    /// Handles one request line.
    pub fn handle_line(&mut self, line: &str) -> (Response, After) {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => (Response::error(ErrorCode::BadRequest, e.to_string()), After::Continue),
        }
    }

    pub fn handle(&mut self, req: Request) -> (Response, After) {
        match req {
            Request::Hello { version, .. } => {
                if version != PROTOCOL_VERSION {
                    let msg = format!("server speaks version {PROTOCOL_VERSION}, client asked for {version}");
                    return (Response::error(ErrorCode::VersionMismatch, msg), After::Close);
                }
                self.greeted = true;
                (self.ready(), After::Continue)
            }
            Request::Close => (self.ready(), After::Close),
            _ if !self.greeted => (
                Response::error(ErrorCode::HelloRequired, "send hello first"),
                After::Continue,
            ),
            Request::Reset(r) => (self.reset(&r), After::Continue),
            Request::Step { action } => (self.step(&action), After::Continue),
        }
    }

    fn reset(&mut self, r: &ResetRequest) -> Response {
        let env = match r.options(&self.cfg).and_then(|opts| Env::new(&self.cfg, opts)) {
            Ok(env) => env,
            Err(e) => return Response::error(ErrorCode::InvalidReset, e.to_string()),
        };
        let resp = Response::Obs {
            obs: env.observation().as_slice().to_vec(),
            t: env.time(),
            privileged: env.privileged(),
        };
        self.env = Some(env);
        resp
    }

    fn step(&mut self, action: &Value) -> Response {
        let Some(env) = self.env.as_mut() else {
            return Response::error(ErrorCode::NotReset, "reset before stepping");
        };
        if env.is_done() {
            return Response::error(ErrorCode::EpisodeDone, "episode has ended; send reset");
        }
        let Some(action) = parse_action(action) else {
            return Response::error(ErrorCode::BadActionShape, "action must be a list of 3 finite numbers");
        };
        match env.step(&action) {
            Ok(tr) => Response::Transition {
                obs: tr.obs.as_slice().to_vec(),
                reward: tr.reward.total,
                reward_terms: tr.reward,
                done: tr.done,
                termination: tr.termination,
                t: env.time(),
                privileged: tr.privileged,
            },
            Err(e) => Response::error(ErrorCode::Internal, e.to_string()),
        }
    }
}

fn parse_action(v: &Value) -> Option<Vector3<f64>> {
    let items = v.as_array()?;
    if items.len() != 3 {
        return None;
    }
    let mut a = Vector3::zeros();
    for (k, item) in items.iter().enumerate() {
        a[k] = item.as_f64().filter(|x| x.is_finite())?;
    }
    Some(a)
}

/// Transport settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    /// The connection is closed when no request arrives for this long.
    pub idle_timeout: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            idle_timeout: Duration::from_secs(60),
        }
    }
}

/// Why a connection ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ended {
    /// The client sent `close` or the version check failed.
    Closed,
    /// The input stream reached end of file.
    Eof,
    IdleTimeout,
}

/// Serves one connection: reads newline-delimited requests from `input`
/// and writes one response line per request to `output`.
pub fn serve_lines<R, W>(cfg: &HopperConfig, input: R, mut output: W, opts: ServeOptions) -> Result<Ended, Error>
where
    R: BufRead + Send + 'static,
    W: Write,
{
    let (tx, rx) = mpsc::sync_channel::<std::io::Result<String>>(1);
    std::thread::spawn(move || {
        for line in input.lines() {
            let failed = line.is_err();
            if tx.send(line).is_err() || failed {
                break;
            }
        }
    });
    let mut session = Session::new(cfg.clone());
    loop {
        let line = match rx.recv_timeout(opts.idle_timeout) {
            Ok(line) => line?,
            Err(mpsc::RecvTimeoutError::Timeout) => return Ok(Ended::IdleTimeout),
            Err(mpsc::RecvTimeoutError::Disconnected) => return Ok(Ended::Eof),
        };
        if line.trim().is_empty() {
            continue;
        }
        let (resp, after) = session.handle_line(&line);
        writeln!(output, "{}", resp.to_json())?;
        output.flush()?;
        if after == After::Close {
            return Ok(Ended::Closed);
        }
    }
}

pub fn serve_stdio(cfg: &HopperConfig, opts: ServeOptions) -> Result<Ended, Error> {
    let stdin = BufReader::new(std::io::stdin());
    serve_lines(cfg, stdin, std::io::stdout().lock(), opts)
}

/// Accepts a single trainer connection on localhost `port` and serves it.
pub fn serve_tcp(cfg: &HopperConfig, port: u16, opts: ServeOptions) -> Result<Ended, Error> {
    serve_listener(cfg, &TcpListener::bind(("127.0.0.1", port))?, opts)
}

/// Accepts a single connection on `listener` and serves it.
pub fn serve_listener(cfg: &HopperConfig, listener: &TcpListener, opts: ServeOptions) -> Result<Ended, Error> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(cfg, reader, stream, opts)
}
