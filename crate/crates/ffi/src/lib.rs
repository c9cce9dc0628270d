//! C ABI over the simulator, the LE-URC controller and trained ensembles.
//!
//! Objects are opaque heap handles released with the matching `*_free`.
//! Fallible calls return an `NBIOT_*` status code; the message of the most
//! recent failure on the calling thread is available from
//! [`nbiot_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nbiot_core::action::{self, ActionVector, GroupAction, N_GROUPS};
use nbiot_core::cli::parse_run_config;
use nbiot_core::controllers::{self, Controller, LeUrc};
use nbiot_core::dqn::{checkpoint, AgentEnsemble, DqnConfig};
use nbiot_core::env::{EnvError, Environment, GroupObservation, ObservationU};
use nbiot_core::phy;
use nbiot_core::{RngStream, SimConfig};

/// CE groups per action and observation.
pub const NBIOT_N_GROUPS: usize = 3;
const _: () = assert!(NBIOT_N_GROUPS == N_GROUPS);

pub const NBIOT_OK: i32 = 0;
/// A required pointer argument was null.
pub const NBIOT_ERR_NULL: i32 = -1;
/// An argument was out of range or not valid UTF-8.
pub const NBIOT_ERR_INVALID_ARGUMENT: i32 = -2;
/// Configuration text, key or value rejected.
pub const NBIOT_ERR_CONFIG: i32 = -3;
/// Call not allowed in the object's current state (e.g. step before reset).
pub const NBIOT_ERR_STATE: i32 = -4;
pub const NBIOT_ERR_IO: i32 = -5;
/// Internal failure; the library caught a panic.
pub const NBIOT_ERR_INTERNAL: i32 = -6;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        let code = match e {
            EnvError::Terminated | EnvError::NotReset => NBIOT_ERR_STATE,
            EnvError::Action(_) => NBIOT_ERR_INVALID_ARGUMENT,
            EnvError::Config(_) => NBIOT_ERR_CONFIG,
            _ => NBIOT_ERR_INTERNAL,
        };
        Self::new(code, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guarded<F: FnOnce() -> Result<(), Failure>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NBIOT_OK,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.code
        }
        Err(_) => {
            set_last_error("internal error");
            NBIOT_ERR_INTERNAL
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(NBIOT_ERR_NULL, format!("{name} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(NBIOT_ERR_NULL, format!("{name} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(NBIOT_ERR_NULL, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(NBIOT_ERR_INVALID_ARGUMENT, format!("{name} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(NBIOT_ERR_NULL, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_slice(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(NBIOT_ERR_NULL, "state buffer is null"));
    }
    if len < values.len() {
        return Err(Failure::new(
            NBIOT_ERR_INVALID_ARGUMENT,
            format!("state buffer holds {len} values, need {}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nbiot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nbiot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NbiotGroupAction {
    pub n_rach: u32,
    pub f_prea: u32,
    pub n_repe: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NbiotAction {
    pub groups: [NbiotGroupAction; NBIOT_N_GROUPS],
}

impl From<NbiotAction> for ActionVector {
    fn from(a: NbiotAction) -> Self {
        ActionVector {
            groups: a.groups.map(|g| GroupAction::new(g.n_rach, g.f_prea, g.n_repe)),
        }
    }
}

impl From<ActionVector> for NbiotAction {
    fn from(a: ActionVector) -> Self {
        NbiotAction {
            groups: a.groups.map(|g| NbiotGroupAction {
                n_rach: g.n_rach,
                f_prea: g.f_prea,
                n_repe: g.n_repe,
            }),
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NbiotGroupObservation {
    pub v_cp: u32,
    pub v_sp: u32,
    pub v_ip: u32,
    pub v_succ: u32,
    pub v_unsc: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NbiotStepResult {
    pub groups: [NbiotGroupObservation; NBIOT_N_GROUPS],
    /// Devices served in the TTI.
    pub reward: f64,
    /// 1-based index of the TTI just simulated.
    pub tti: u32,
    pub terminal: bool,
}

fn observation(r: &NbiotStepResult) -> ObservationU {
    ObservationU {
        groups: r.groups.map(|g| GroupObservation {
            v_cp: g.v_cp,
            v_sp: g.v_sp,
            v_ip: g.v_ip,
            v_succ: g.v_succ,
            v_unsc: g.v_unsc,
        }),
    }
}

/// Simulation and learner settings.
pub struct NbiotConfig {
    sim: SimConfig,
    dqn: DqnConfig,
}

pub struct NbiotEnv {
    env: Environment,
}

pub struct NbiotLeUrc {
    ctl: LeUrc,
}

pub struct NbiotEnsemble {
    ensemble: AgentEnsemble,
}

/// Default settings. Never null.
#[no_mangle]
pub extern "C" fn nbiot_config_default() -> *mut NbiotConfig {
    Box::into_raw(Box::new(NbiotConfig {
        sim: SimConfig::default(),
        dqn: DqnConfig::default(),
    }))
}

/// Parses `key = value` lines (defaults for missing keys) into `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_config_parse(text: *const c_char, out: *mut *mut NbiotConfig) -> i32 {
    guarded(|| {
        let text = c_str(text, "text")?;
        let (sim, dqn) = parse_run_config(text).map_err(|e| Failure::new(NBIOT_ERR_CONFIG, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(NbiotConfig { sim, dqn })), "out")
    })
}

/// Sets one setting. The configuration is validated when it is used.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn nbiot_config_set(cfg: *mut NbiotConfig, key: *const c_char, value: *const c_char) -> i32 {
    guarded(|| {
        let cfg = borrow_mut(cfg, "cfg")?;
        let (key, value) = (c_str(key, "key")?, c_str(value, "value")?);
        let known = match cfg.sim.set(key, value) {
            Ok(false) => cfg.dqn.set(key, value),
            other => other,
        };
        match known {
            Ok(true) => Ok(()),
            Ok(false) => Err(Failure::new(NBIOT_ERR_CONFIG, format!("unknown key {key:?}"))),
            Err(m) => Err(Failure::new(NBIOT_ERR_CONFIG, format!("{key}: {m}"))),
        }
    })
}

/// # Safety
/// `cfg` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nbiot_config_free(cfg: *mut NbiotConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Uplink REs per TTI for `cfg`.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_uplink_re_budget(cfg: *const NbiotConfig, out: *mut u32) -> i32 {
    guarded(|| {
        let cfg = borrow(cfg, "cfg")?;
        let b = action::uplink_re_budget(&cfg.sim).map_err(|e| Failure::new(NBIOT_ERR_CONFIG, e.to_string()))?;
        write_out(out, b, "out")
    })
}

/// REs taken by the RACH of all three groups under `action`.
///
/// # Safety
/// `cfg` must come from this library; `action` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_rach_re_cost(cfg: *const NbiotConfig, action: *const NbiotAction, out: *mut u64) -> i32 {
    guarded(|| {
        let cfg = borrow(cfg, "cfg")?;
        let a: ActionVector = (*borrow(action, "action")?).into();
        write_out(out, action::rach_re_cost(&a, &cfg.sim), "out")
    })
}

/// Probability that one preamble with `n_repe` repetitions is detected when
/// its mean SNR is `ratio` times the threshold (Rayleigh fading, four symbol
/// groups per repetition).
#[no_mangle]
pub extern "C" fn nbiot_detection_probability(ratio: f64, n_repe: u32) -> f64 {
    phy::detection_probability_for_ratio(ratio, n_repe)
}

/// Contender estimate from `v_idle` idle preambles out of `f_prea`.
#[no_mangle]
pub extern "C" fn nbiot_zeta(f_prea: u32, v_idle: f64, cap: f64) -> f64 {
    controllers::zeta(f_prea, v_idle, cap)
}

/// Expected data requests from `n` contenders on `f_prea` preambles plus
/// `v_unsc` devices still waiting.
#[no_mangle]
pub extern "C" fn nbiot_expected_requests(n: f64, f_prea: u32, v_unsc: u32) -> f64 {
    controllers::expected_requests(n, f_prea, v_unsc)
}

/// Creates an environment; the configuration is copied.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_env_new(cfg: *const NbiotConfig, out: *mut *mut NbiotEnv) -> i32 {
    guarded(|| {
        let cfg = borrow(cfg, "cfg")?;
        let env = Environment::new(cfg.sim.clone())?;
        write_out(out, Box::into_raw(Box::new(NbiotEnv { env })), "out")
    })
}

/// Length of the state vectors written by reset and step.
///
/// # Safety
/// `env` must come from this library or be null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn nbiot_env_state_len(env: *const NbiotEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.state_len())
}

/// Starts an episode drawn from `seed` and writes the initial state.
///
/// # Safety
/// `env` must come from this library; `state` must hold `state_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nbiot_env_reset(env: *mut NbiotEnv, seed: u64, state: *mut f64, state_len: usize) -> i32 {
    guarded(|| {
        let env = borrow_mut(env, "env")?;
        let s = env.env.reset(&RngStream::new(seed));
        write_slice(state, state_len, &s.0)
    })
}

/// Simulates one TTI. `state` may be null when the next state is not needed.
///
/// # Safety
/// `env` must come from this library; `action` readable; `result` writable;
/// a non-null `state` must hold `state_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nbiot_env_step(
    env: *mut NbiotEnv,
    action: *const NbiotAction,
    result: *mut NbiotStepResult,
    state: *mut f64,
    state_len: usize,
) -> i32 {
    guarded(|| {
        let env = borrow_mut(env, "env")?;
        let a: ActionVector = (*borrow(action, "action")?).into();
        if result.is_null() {
            return Err(Failure::new(NBIOT_ERR_NULL, "result is null"));
        }
        let step = env.env.step(&a)?;
        if !state.is_null() {
            write_slice(state, state_len, &step.state.0)?;
        }
        let r = NbiotStepResult {
            groups: step.obs.groups.map(|g| NbiotGroupObservation {
                v_cp: g.v_cp,
                v_sp: g.v_sp,
                v_ip: g.v_ip,
                v_succ: g.v_succ,
                v_unsc: g.v_unsc,
            }),
            reward: step.reward,
            tti: env.env.tti() as u32,
            terminal: step.terminal,
        };
        write_out(result, r, "result")
    })
}

/// # Safety
/// `env` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nbiot_env_free(env: *mut NbiotEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// LE-URC with fixed repetitions `n_repe[0..3]`.
///
/// # Safety
/// `cfg` must come from this library; `n_repe` must point to 3 values.
#[no_mangle]
pub unsafe extern "C" fn nbiot_le_urc_new(cfg: *const NbiotConfig, n_repe: *const u32, out: *mut *mut NbiotLeUrc) -> i32 {
    guarded(|| {
        let cfg = borrow(cfg, "cfg")?;
        if n_repe.is_null() {
            return Err(Failure::new(NBIOT_ERR_NULL, "n_repe is null"));
        }
        let repe: [u32; N_GROUPS] = std::array::from_fn(|i| *n_repe.add(i));
        let ctl = LeUrc::new(&cfg.sim, repe).map_err(|e| Failure::new(NBIOT_ERR_INVALID_ARGUMENT, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(NbiotLeUrc { ctl })), "out")
    })
}

/// Action for the coming TTI.
///
/// # Safety
/// `ctl` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_le_urc_decide(ctl: *mut NbiotLeUrc, out: *mut NbiotAction) -> i32 {
    guarded(|| {
        let ctl = borrow_mut(ctl, "ctl")?;
        write_out(out, ctl.ctl.decide().into(), "out")
    })
}

/// Feeds back the outcome of the TTI that ran with `action`.
///
/// # Safety
/// `ctl` must come from this library; `result` and `action` readable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_le_urc_observe(
    ctl: *mut NbiotLeUrc,
    result: *const NbiotStepResult,
    action: *const NbiotAction,
) -> i32 {
    guarded(|| {
        let ctl = borrow_mut(ctl, "ctl")?;
        let r = borrow(result, "result")?;
        let a: ActionVector = (*borrow(action, "action")?).into();
        ctl.ctl.observe(&observation(r), &a, r.reward);
        Ok(())
    })
}

/// Clears the load estimates before a new episode.
///
/// # Safety
/// `ctl` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn nbiot_le_urc_reset(ctl: *mut NbiotLeUrc) -> i32 {
    guarded(|| {
        borrow_mut(ctl, "ctl")?.ctl.reset();
        Ok(())
    })
}

/// # Safety
/// `ctl` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nbiot_le_urc_free(ctl: *mut NbiotLeUrc) {
    if !ctl.is_null() {
        drop(Box::from_raw(ctl));
    }
}

/// Loads a training checkpoint written by `nbiot-sim`; `cfg` must describe
/// the same network shapes.
///
/// # Safety
/// `path` must be a NUL-terminated string; `cfg` from this library; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_ensemble_load(
    path: *const c_char,
    cfg: *const NbiotConfig,
    out: *mut *mut NbiotEnsemble,
) -> i32 {
    guarded(|| {
        let path = c_str(path, "path")?;
        let cfg = borrow(cfg, "cfg")?;
        let ensemble = checkpoint::load_file(Path::new(path), &cfg.sim, &cfg.dqn).map_err(|e| {
            let code = match e {
                nbiot_core::dqn::DqnError::Io(_) => NBIOT_ERR_IO,
                nbiot_core::dqn::DqnError::Config(_) => NBIOT_ERR_CONFIG,
                _ => NBIOT_ERR_INVALID_ARGUMENT,
            };
            Failure::new(code, e.to_string())
        })?;
        write_out(out, Box::into_raw(Box::new(NbiotEnsemble { ensemble })), "out")
    })
}

/// Greedy joint action of the nine agents for `state`.
///
/// # Safety
/// `ens` must come from this library; `state` must hold `state_len`
/// doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nbiot_ensemble_greedy(
    ens: *const NbiotEnsemble,
    state: *const f64,
    state_len: usize,
    out: *mut NbiotAction,
) -> i32 {
    guarded(|| {
        let ens = borrow(ens, "ens")?;
        if state.is_null() {
            return Err(Failure::new(NBIOT_ERR_NULL, "state is null"));
        }
        let s = std::slice::from_raw_parts(state, state_len);
        let (a, _) = ens
            .ensemble
            .greedy_actions(s)
            .map_err(|e| Failure::new(NBIOT_ERR_INVALID_ARGUMENT, e.to_string()))?;
        write_out(out, a.into(), "out")
    })
}

/// # Safety
/// `ens` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nbiot_ensemble_free(ens: *mut NbiotEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}
