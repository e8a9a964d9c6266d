//! C ABI for hoplab.
//!
//! Every fallible function returns a [`HoplabStatus`]; on failure the
//! message is available from [`hoplab_last_error`] on the same thread.
//! Handles are opaque, created by `*_new` functions and released by the
//! matching `*_free`. Vectors are passed as pointers to 3 doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::Vector3;

use hoplab::control::{Command, OBS_DIM};
use hoplab::conversion::{JointTorques, MatchedPose, Parallel};
use hoplab::geometry::{fk_serial, ik_serial, FootPosition};
use hoplab::rollout::{After, Env, EnvOptions, Session};
use hoplab::{Error, HopperConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoplabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Kinematics = 4,
    Sim = 5,
    Episode = 6,
    EpisodeDone = 7,
    Io = 8,
    Panic = 9,
}

/// Robot configuration.
pub struct HoplabConfig {
    inner: HopperConfig,
}

/// One environment episode stepped at the control rate.
pub struct HoplabEnv {
    inner: Env,
}

/// One trainer-protocol session.
pub struct HoplabSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> HoplabStatus {
    match e {
        Error::Kinematics(_) => HoplabStatus::Kinematics,
        Error::Config(_) => HoplabStatus::Config,
        Error::Sim(_) => HoplabStatus::Sim,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Policy(_) => HoplabStatus::Io,
        Error::Episode(_) => HoplabStatus::Episode,
    }
}

fn fail(status: HoplabStatus, msg: impl Into<String>) -> HoplabStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording errors and converting panics.
fn guard<F>(f: F) -> HoplabStatus
where
    F: FnOnce() -> Result<(), (HoplabStatus, String)>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HoplabStatus::Ok,
        Ok(Err((status, msg))) => fail(status, msg),
        Err(_) => fail(HoplabStatus::Panic, "panic inside hoplab"),
    }
}

fn lift<T, E: Into<Error>>(r: Result<T, E>) -> Result<T, (HoplabStatus, String)> {
    r.map_err(|e| {
        let e = e.into();
        (status_of(&e), e.to_string())
    })
}

fn null(what: &str) -> (HoplabStatus, String) {
    (HoplabStatus::NullPointer, format!("`{what}` is NULL"))
}

unsafe fn read3(p: *const f64, what: &str) -> Result<Vector3<f64>, (HoplabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vector3::new(s[0], s[1], s[2]))
}

unsafe fn write3(p: *mut f64, v: &Vector3<f64>, what: &str) -> Result<(), (HoplabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    std::slice::from_raw_parts_mut(p, 3).copy_from_slice(v.as_slice());
    Ok(())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (HoplabStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (HoplabStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (HoplabStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next hoplab call on the same thread.
#[no_mangle]
pub extern "C" fn hoplab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Length of the observation vector.
#[no_mangle]
pub extern "C" fn hoplab_obs_dim() -> usize {
    OBS_DIM
}

/// Default configuration.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn hoplab_config_default(out: *mut *mut HoplabConfig) -> HoplabStatus {
    guard(|| {
        put(
            out,
            HoplabConfig {
                inner: HopperConfig::default(),
            },
        )
    })
}

/// Configuration parsed from TOML text; omitted keys take defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for writing one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn hoplab_config_from_toml(toml: *const c_char, out: *mut *mut HoplabConfig) -> HoplabStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (HoplabStatus::InvalidArgument, e.to_string()))?;
        let cfg = lift(HopperConfig::from_toml_str(text))?;
        put(out, HoplabConfig { inner: cfg })
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from a `hoplab_config_*` constructor that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn hoplab_config_free(cfg: *mut HoplabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Foot position of the parallel leg for motor angles `q`.
///
/// # Safety
/// `cfg` must be a live handle; `q` and `foot` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn hoplab_fk(cfg: *const HoplabConfig, q: *const f64, foot: *mut f64) -> HoplabStatus {
    guard(|| {
        let geom = lift(deref(cfg, "cfg")?.inner.chain_geometry())?;
        let x = lift(geom.fk_parallel(&read3(q, "q")?))?;
        write3(foot, &x.0, "foot")
    })
}

/// Motor angles placing the foot at `foot`.
///
/// # Safety
/// `cfg` must be a live handle; `foot` and `q` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn hoplab_ik(cfg: *const HoplabConfig, foot: *const f64, q: *mut f64) -> HoplabStatus {
    guard(|| {
        let geom = lift(deref(cfg, "cfg")?.inner.chain_geometry())?;
        let x = read3(foot, "foot")?;
        let sol = lift(geom.ik_parallel(&FootPosition(x)))?;
        write3(q, &sol, "q")
    })
}

/// Template joints `(roll, pitch, ext)` placing the foot at `foot`.
///
/// # Safety
/// `cfg` must be a live handle; `foot` and `serial_q` must point to 3
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn hoplab_ik_serial(
    cfg: *const HoplabConfig,
    foot: *const f64,
    serial_q: *mut f64,
) -> HoplabStatus {
    guard(|| {
        let limits = deref(cfg, "cfg")?.inner.limits.serial();
        let q = lift(ik_serial(&FootPosition(read3(foot, "foot")?), &limits))?;
        write3(serial_q, &q, "serial_q")
    })
}

/// Foot position of the template for joints `serial_q`.
///
/// # Safety
/// `serial_q` and `foot` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn hoplab_fk_serial(serial_q: *const f64, foot: *mut f64) -> HoplabStatus {
    guard(|| write3(foot, &fk_serial(&read3(serial_q, "serial_q")?).0, "foot"))
}

/// Template efforts equivalent to motor torques `tau_parallel` at the
/// matched pose of template joints `serial_q`.
///
/// # Safety
/// `cfg` must be a live handle; the vectors must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn hoplab_parallel_to_serial(
    cfg: *const HoplabConfig,
    serial_q: *const f64,
    tau_parallel: *const f64,
    tau_serial: *mut f64,
) -> HoplabStatus {
    guard(|| {
        let geom = lift(deref(cfg, "cfg")?.inner.chain_geometry())?;
        let pose = lift(MatchedPose::new(&geom, &read3(serial_q, "serial_q")?))?;
        let tp = JointTorques::<Parallel>::new(read3(tau_parallel, "tau_parallel")?);
        write3(tau_serial, &pose.parallel_to_serial(&tp).tau, "tau_serial")
    })
}

/// Starts an episode on flat ground with torque mapping. Each step takes
/// a motor-angle target.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn hoplab_env_new(
    cfg: *const HoplabConfig,
    seed: u64,
    vx: f64,
    vy: f64,
    period: f64,
    horizon: f64,
    randomize: bool,
    out: *mut *mut HoplabEnv,
) -> HoplabStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.inner;
        let mut opts = EnvOptions::new(seed, lift(Command::new(vx, vy, period))?, horizon);
        opts.randomize = randomize;
        let env = lift(Env::new(cfg, opts))?;
        put(out, HoplabEnv { inner: env })
    })
}

/// # Safety
/// `env` must be NULL or a live handle from [`hoplab_env_new`].
#[no_mangle]
pub unsafe extern "C" fn hoplab_env_free(env: *mut HoplabEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

unsafe fn write_obs(env: &Env, obs: *mut f64, len: usize) -> Result<(), (HoplabStatus, String)> {
    if obs.is_null() {
        return Err(null("obs"));
    }
    if len != OBS_DIM {
        return Err((
            HoplabStatus::InvalidArgument,
            format!("obs buffer holds {len} values, need {OBS_DIM}"),
        ));
    }
    std::slice::from_raw_parts_mut(obs, len).copy_from_slice(env.observation().as_slice());
    Ok(())
}

/// Current observation.
///
/// # Safety
/// `env` must be a live handle and `obs` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hoplab_env_observation(env: *const HoplabEnv, obs: *mut f64, len: usize) -> HoplabStatus {
    guard(|| write_obs(&deref(env, "env")?.inner, obs, len))
}

/// Advances one control step with motor target `action` and writes the
/// next observation, the reward and the done flag.
///
/// # Safety
/// `env` must be a live handle, `action` point to 3 doubles, `obs` to `len`
/// doubles, and `reward` and `done` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hoplab_env_step(
    env: *mut HoplabEnv,
    action: *const f64,
    obs: *mut f64,
    len: usize,
    reward: *mut f64,
    done: *mut bool,
) -> HoplabStatus {
    guard(|| {
        let env = &mut deref_mut(env, "env")?.inner;
        if reward.is_null() || done.is_null() {
            return Err(null("reward/done"));
        }
        if env.is_done() {
            return Err((HoplabStatus::EpisodeDone, "episode has ended".into()));
        }
        let a = read3(action, "action")?;
        if !a.iter().all(|v| v.is_finite()) {
            return Err((HoplabStatus::InvalidArgument, "action must be finite".into()));
        }
        let tr = lift(env.step(&a))?;
        write_obs(env, obs, len)?;
        *reward = tr.reward.total;
        *done = tr.done;
        Ok(())
    })
}

/// Simulated time of the episode, s.
///
/// # Safety
/// `env` must be a live handle and `t` writable.
#[no_mangle]
pub unsafe extern "C" fn hoplab_env_time(env: *const HoplabEnv, t: *mut f64) -> HoplabStatus {
    guard(|| {
        let env = &deref(env, "env")?.inner;
        *deref_mut(t, "t")? = env.time();
        Ok(())
    })
}

/// New protocol session.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn hoplab_session_new(cfg: *const HoplabConfig, out: *mut *mut HoplabSession) -> HoplabStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?.inner.clone();
        put(
            out,
            HoplabSession {
                inner: Session::new(cfg),
            },
        )
    })
}

/// # Safety
/// `session` must be NULL or a live handle from [`hoplab_session_new`].
#[no_mangle]
pub unsafe extern "C" fn hoplab_session_free(session: *mut HoplabSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Handles one request line and returns the JSON response in `response`,
/// to be released with [`hoplab_string_free`]. `close` is set when the
/// session should end. Protocol errors are reported inside the response,
/// not through the status.
///
/// # Safety
/// `session` must be a live handle, `request` a NUL-terminated string, and
/// `response` and `close` writable.
#[no_mangle]
pub unsafe extern "C" fn hoplab_session_handle(
    session: *mut HoplabSession,
    request: *const c_char,
    response: *mut *mut c_char,
    close: *mut bool,
) -> HoplabStatus {
    guard(|| {
        let session = &mut deref_mut(session, "session")?.inner;
        if request.is_null() {
            return Err(null("request"));
        }
        if response.is_null() || close.is_null() {
            return Err(null("response/close"));
        }
        let line = CStr::from_ptr(request).to_string_lossy();
        let (resp, after) = session.handle_line(&line);
        *response = CString::new(resp.to_json()).expect("JSON has no NUL").into_raw();
        *close = after == After::Close;
        Ok(())
    })
}

/// Releases a string returned by hoplab.
///
/// # Safety
/// `s` must be NULL or a string returned by hoplab that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn hoplab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
