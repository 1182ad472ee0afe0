//! C interface to the batched simulator.
//!
//! Handles are opaque pointers created by [`evc_batch_new`] and released with
//! [`evc_batch_free`]. Every function returns an [`EvcStatus`]; on failure the
//! message is available from [`evc_last_error_message`] on the same thread.
//! Buffers are row-major: observations `batch x obs_len`, actions
//! `batch x action_len`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use evcharge::batch::{BatchEnv, BatchError};
use evcharge::config::{ConfigError, RunConfig};
use evcharge::env::EnvError;
use evcharge::StepInfo;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    DataError = 4,
    EpisodeDone = 5,
    Panic = 6,
}

/// Opaque batch of environments.
pub struct EvcBatch {
    inner: BatchEnv,
    last_infos: Vec<StepInfo>,
    infos_json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn fail(status: EvcStatus, msg: impl Into<String>) -> EvcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> EvcStatus) -> EvcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(EvcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn batch_status(e: &BatchError) -> EvcStatus {
    match e {
        BatchError::EmptyBatch | BatchError::Pool(_) => EvcStatus::InvalidArgument,
        BatchError::ShapeMismatch { .. } => EvcStatus::ShapeMismatch,
        BatchError::Env { source: EnvError::EpisodeDone, .. } => EvcStatus::EpisodeDone,
        BatchError::Env { .. } => EvcStatus::InvalidArgument,
    }
}

/// Creates `batch` environments seeded from `seed`.
///
/// `config_json` is a run configuration document or NULL for defaults.
/// Auto-reset is on.
///
/// # Safety
/// `config_json` must be NULL or a valid NUL-terminated string; `out` must be
/// a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn evc_batch_new(
    config_json: *const c_char,
    batch: usize,
    seed: u64,
    out: *mut *mut EvcBatch,
) -> EvcStatus {
    guard(|| {
        if out.is_null() {
            return fail(EvcStatus::NullPointer, "out is NULL");
        }
        *out = ptr::null_mut();
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            let text = match CStr::from_ptr(config_json).to_str() {
                Ok(t) => t,
                Err(e) => return fail(EvcStatus::InvalidArgument, format!("config is not UTF-8: {e}")),
            };
            match RunConfig::from_json_str(text) {
                Ok(c) => c,
                Err(e) => return fail(EvcStatus::InvalidArgument, format!("invalid config: {e}")),
            }
        };
        let env = match cfg.build_env() {
            Ok(env) => env,
            Err(e @ (ConfigError::Env(EnvError::Config(_)) | ConfigError::Parse { .. })) => {
                return fail(EvcStatus::InvalidArgument, e.to_string())
            }
            Err(e) => return fail(EvcStatus::DataError, e.to_string()),
        };
        let mut inner = match BatchEnv::new(env, batch, seed) {
            Ok(b) => b,
            Err(e) => return fail(batch_status(&e), e.to_string()),
        };
        if let Err(e) = inner.set_workers(cfg.workers) {
            return fail(batch_status(&e), e.to_string());
        }
        *out = Box::into_raw(Box::new(EvcBatch { inner, last_infos: Vec::new(), infos_json: CString::default() }));
        EvcStatus::Ok
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `handle` must be NULL or a pointer returned by [`evc_batch_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn evc_batch_free(handle: *mut EvcBatch) {
    if !handle.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(handle))));
    }
}

unsafe fn with_handle<'a>(handle: *const EvcBatch) -> Option<&'a EvcBatch> {
    handle.as_ref()
}

/// Number of environments; 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evc_batch_size(handle: *const EvcBatch) -> usize {
    with_handle(handle).map_or(0, |h| h.inner.len())
}

/// Length of one observation row; 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evc_obs_len(handle: *const EvcBatch) -> usize {
    with_handle(handle).map_or(0, |h| h.inner.obs_len())
}

/// Entries per action row: ports plus the battery slot; 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evc_action_len(handle: *const EvcBatch) -> usize {
    with_handle(handle).map_or(0, |h| h.inner.action_len())
}

/// Choices per action entry (`2K + 1`); 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evc_num_actions(handle: *const EvcBatch) -> u32 {
    with_handle(handle).map_or(0, |h| h.inner.env().config().action_choices())
}

/// Worker threads for stepping; 0 means all cores.
///
/// # Safety
/// `handle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evc_batch_set_workers(handle: *mut EvcBatch, workers: usize) -> EvcStatus {
    guard(|| {
        let Some(h) = handle.as_mut() else { return fail(EvcStatus::NullPointer, "handle is NULL") };
        match h.inner.set_workers((workers > 0).then_some(workers)) {
            Ok(()) => EvcStatus::Ok,
            Err(e) => fail(batch_status(&e), e.to_string()),
        }
    })
}

/// Writes finite per-entry observation bounds (`obs_len` each).
///
/// # Safety
/// `low` and `high` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn evc_observation_bounds(
    handle: *const EvcBatch,
    low: *mut f64,
    high: *mut f64,
    len: usize,
) -> EvcStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else { return fail(EvcStatus::NullPointer, "handle is NULL") };
        if low.is_null() || high.is_null() {
            return fail(EvcStatus::NullPointer, "bounds buffer is NULL");
        }
        let (lo, hi) = h.inner.env().observation_bounds();
        if len != lo.len() {
            return fail(EvcStatus::ShapeMismatch, format!("bounds length {len}, expected {}", lo.len()));
        }
        slice::from_raw_parts_mut(low, len).copy_from_slice(&lo);
        slice::from_raw_parts_mut(high, len).copy_from_slice(&hi);
        EvcStatus::Ok
    })
}

/// Resets every environment to its first episode.
///
/// # Safety
/// `obs_out` must point to `obs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn evc_batch_reset(handle: *mut EvcBatch, obs_out: *mut f64, obs_len: usize) -> EvcStatus {
    guard(|| {
        let Some(h) = handle.as_mut() else { return fail(EvcStatus::NullPointer, "handle is NULL") };
        if obs_out.is_null() {
            return fail(EvcStatus::NullPointer, "obs_out is NULL");
        }
        let expected = h.inner.len() * h.inner.obs_len();
        if obs_len != expected {
            return fail(
                EvcStatus::ShapeMismatch,
                format!("observation buffer has {obs_len} entries, expected {expected}"),
            );
        }
        h.inner.reset_into(slice::from_raw_parts_mut(obs_out, obs_len));
        h.last_infos.clear();
        EvcStatus::Ok
    })
}

/// Steps every environment. Finished environments are reset automatically:
/// their `dones` entry is 1 and their observation row is the fresh episode's.
///
/// # Safety
/// `actions` must point to `actions_len` readable values, `obs_out` to
/// `obs_len` writable doubles, `rewards_out` to `batch` writable doubles and
/// `dones_out` to `batch` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn evc_batch_step(
    handle: *mut EvcBatch,
    actions: *const u32,
    actions_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    rewards_out: *mut f64,
    dones_out: *mut u8,
    batch: usize,
) -> EvcStatus {
    guard(|| {
        let Some(h) = handle.as_mut() else { return fail(EvcStatus::NullPointer, "handle is NULL") };
        if actions.is_null() || obs_out.is_null() || rewards_out.is_null() || dones_out.is_null() {
            return fail(EvcStatus::NullPointer, "buffer is NULL");
        }
        if batch != h.inner.len() {
            return fail(EvcStatus::ShapeMismatch, format!("batch {batch}, expected {}", h.inner.len()));
        }
        let actions = slice::from_raw_parts(actions, actions_len);
        let obs = slice::from_raw_parts_mut(obs_out, obs_len);
        let rewards = slice::from_raw_parts_mut(rewards_out, batch);
        let mut dones = vec![false; batch];
        match h.inner.step_into(actions, obs, rewards, &mut dones) {
            Ok(infos) => {
                for (o, d) in slice::from_raw_parts_mut(dones_out, batch).iter_mut().zip(&dones) {
                    *o = *d as u8;
                }
                h.last_infos = infos;
                EvcStatus::Ok
            }
            Err(e) => fail(batch_status(&e), e.to_string()),
        }
    })
}

/// JSON array with the step details of the last [`evc_batch_step`], one
/// object per environment. The string stays valid until the next call on
/// this handle.
///
/// # Safety
/// `handle` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evc_batch_last_infos_json(handle: *mut EvcBatch, out: *mut *const c_char) -> EvcStatus {
    guard(|| {
        let Some(h) = handle.as_mut() else { return fail(EvcStatus::NullPointer, "handle is NULL") };
        if out.is_null() {
            return fail(EvcStatus::NullPointer, "out is NULL");
        }
        let text = serde_json::to_string(&h.last_infos).expect("step info serializes");
        h.infos_json = CString::new(text).expect("json has no nul bytes");
        *out = h.infos_json.as_ptr();
        EvcStatus::Ok
    })
}

/// Message of the last failed call on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn evc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
