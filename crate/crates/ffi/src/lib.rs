//! C ABI over `maskgrad`: load checkpoints, query masks, run the
//! environments and the scripted expert from any language with a C FFI.
//!
//! Conventions:
//! - Every fallible function returns an [`MgStatus`]. On failure a message
//!   is stored per thread and can be fetched with [`mg_last_error_message`].
//! - Handles are opaque, created by `*_new`/`*_load` and released by the
//!   matching `*_free`. Freeing NULL is a no-op.
//! - Buffers are caller-owned; lengths are element counts and must match
//!   the dimensions reported by the `*_dims` functions exactly.
//! - Panics never cross the boundary; they surface as `MG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use maskgrad::mask::{column_relevance, Mask, Normalization};
use maskgrad::model::Checkpoint;
use maskgrad::world::{evaluate, EnvSpec, Regime, Task};
use maskgrad::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Parse = 5,
    LayoutMismatch = 6,
    NonFinite = 7,
    NoMask = 8,
    Panic = 9,
    Internal = 10,
}

pub const MG_TASK_REACH: u32 = 0;
pub const MG_TASK_PUSH: u32 = 1;

pub const MG_REGIME_ID: u32 = 0;
pub const MG_REGIME_OOD: u32 = 1;
pub const MG_REGIME_OOD_RELEVANT: u32 = 2;
pub const MG_REGIME_OOD_IRRELEVANT: u32 = 3;

pub const MG_NORM_SOFTMAX: u32 = 0;
pub const MG_NORM_SPARSEMAX: u32 = 1;

/// A loaded checkpoint (any method, including the expert).
pub struct MgCheckpoint {
    checkpoint: Checkpoint,
    mask: Option<Mask>,
}

/// An environment instance holding its current state.
pub struct MgEnv {
    spec: EnvSpec,
    state: Vec<f64>,
}

struct Failure {
    status: MgStatus,
    message: String,
}

impl Failure {
    fn new(status: MgStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. } => MgStatus::DimensionMismatch,
            Error::NonFinite(_) | Error::NonFiniteLoss { .. } => MgStatus::NonFinite,
            Error::InvalidParams(_) | Error::Config(_) => MgStatus::InvalidArgument,
            Error::LayoutMismatch(_) => MgStatus::LayoutMismatch,
            Error::Io(_) => MgStatus::Io,
            Error::Json(_) | Error::Csv(_) => MgStatus::Parse,
            _ => MgStatus::Internal,
        };
        Self::new(status, e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MgStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(MgStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn in_slice<'a>(ptr: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn expect_len(what: &str, expected: usize, got: usize) -> FfiResult {
    if expected != got {
        return Err(Failure::new(MgStatus::DimensionMismatch, format!("{what}: expected length {expected}, got {got}")));
    }
    Ok(())
}

unsafe fn write_out<T>(ptr: *mut T, value: T) {
    if !ptr.is_null() {
        *ptr = value;
    }
}

fn task_from(code: u32) -> FfiResult<Task> {
    match code {
        MG_TASK_REACH => Ok(Task::Reach),
        MG_TASK_PUSH => Ok(Task::Push),
        _ => Err(Failure::new(MgStatus::InvalidArgument, format!("unknown task code {code}"))),
    }
}

fn regime_from(code: u32) -> FfiResult<Regime> {
    match code {
        MG_REGIME_ID => Ok(Regime::Id),
        MG_REGIME_OOD => Ok(Regime::Ood),
        MG_REGIME_OOD_RELEVANT => Ok(Regime::OodRelevant),
        MG_REGIME_OOD_IRRELEVANT => Ok(Regime::OodIrrelevant),
        _ => Err(Failure::new(MgStatus::InvalidArgument, format!("unknown regime code {code}"))),
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, excluding
/// the terminator, or 0 if there is none.
///
/// # Safety
/// `buf` must be NULL or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint JSON file. `path` is UTF-8.
///
/// # Safety
/// `path` must be a valid C string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_load(path: *const c_char, out: *mut *mut MgCheckpoint) -> MgStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::new(MgStatus::InvalidArgument, "path is not UTF-8"))?;
        let checkpoint = Checkpoint::load(Path::new(path))?;
        let mask = checkpoint.model.mask()?;
        *out = Box::into_raw(Box::new(MgCheckpoint { checkpoint, mask }));
        Ok(())
    })
}

/// A checkpoint acting with the scripted expert of `task`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_expert(task: u32, out: *mut *mut MgCheckpoint) -> MgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let checkpoint = Checkpoint::expert(EnvSpec::for_task(task_from(task)?));
        *out = Box::into_raw(Box::new(MgCheckpoint { checkpoint, mask: None }));
        Ok(())
    })
}

/// # Safety
/// `ck` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_free(ck: *mut MgCheckpoint) {
    if !ck.is_null() {
        drop(Box::from_raw(ck));
    }
}

/// State and action dimensions of the checkpoint's environment. Either
/// output may be NULL.
///
/// # Safety
/// `ck` must be a live handle; outputs NULL or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_dims(ck: *const MgCheckpoint, state_dim: *mut usize, action_dim: *mut usize) -> MgStatus {
    guard(|| {
        let ck = ck.as_ref().ok_or_else(|| null("checkpoint"))?;
        write_out(state_dim, ck.checkpoint.env.state_dim());
        write_out(action_dim, ck.checkpoint.env.action_dim());
        Ok(())
    })
}

/// Whether the checkpoint has a mask (TransMASK and plain BC do).
///
/// # Safety
/// `ck` must be a live handle; `has_mask` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_has_mask(ck: *const MgCheckpoint, has_mask: *mut bool) -> MgStatus {
    guard(|| {
        let ck = ck.as_ref().ok_or_else(|| null("checkpoint"))?;
        if has_mask.is_null() {
            return Err(null("has_mask"));
        }
        *has_mask = ck.mask.is_some();
        Ok(())
    })
}

/// Policy action for one state.
///
/// # Safety
/// `ck` must be a live handle; buffers valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_act(
    ck: *const MgCheckpoint,
    state: *const f64,
    state_len: usize,
    action: *mut f64,
    action_len: usize,
) -> MgStatus {
    guard(|| {
        let ck = ck.as_ref().ok_or_else(|| null("checkpoint"))?;
        let env = &ck.checkpoint.env;
        expect_len("state", env.state_dim(), state_len)?;
        expect_len("action", env.action_dim(), action_len)?;
        let s = in_slice(state, state_len, "state")?;
        let out = out_slice(action, action_len, "action")?;
        let a = ck.checkpoint.actor()?.act(s)?;
        out.copy_from_slice(&a);
        Ok(())
    })
}

fn require_mask(ck: &MgCheckpoint) -> FfiResult<&Mask> {
    ck.mask.as_ref().ok_or_else(|| {
        Failure::new(MgStatus::NoMask, format!("a {} checkpoint has no mask", ck.checkpoint.method.as_str()))
    })
}

/// The n×n mask in row-major order (`len` = n·n).
///
/// # Safety
/// `ck` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_mask(ck: *const MgCheckpoint, out: *mut f64, len: usize) -> MgStatus {
    guard(|| {
        let ck = ck.as_ref().ok_or_else(|| null("checkpoint"))?;
        let mask = require_mask(ck)?;
        expect_len("mask", mask.n() * mask.n(), len)?;
        out_slice(out, len, "out")?.copy_from_slice(mask.matrix().values());
        Ok(())
    })
}

/// Max-normalized column relevance (`len` = n).
///
/// # Safety
/// `ck` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_relevance(ck: *const MgCheckpoint, out: *mut f64, len: usize) -> MgStatus {
    guard(|| {
        let ck = ck.as_ref().ok_or_else(|| null("checkpoint"))?;
        let mask = require_mask(ck)?;
        expect_len("relevance", mask.n(), len)?;
        out_slice(out, len, "out")?.copy_from_slice(column_relevance(mask).values());
        Ok(())
    })
}

/// Success rate over `episodes` rollouts from `regime`, seeded by `seed`.
/// Optional outputs may be NULL.
///
/// # Safety
/// `ck` must be a live handle; outputs NULL or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_evaluate(
    ck: *const MgCheckpoint,
    regime: u32,
    episodes: usize,
    seed: u64,
    success_rate: *mut f64,
    successes: *mut usize,
    non_finite: *mut usize,
) -> MgStatus {
    guard(|| {
        let ck = ck.as_ref().ok_or_else(|| null("checkpoint"))?;
        let regime = regime_from(regime)?;
        if episodes == 0 {
            return Err(Failure::new(MgStatus::InvalidArgument, "episodes must be positive"));
        }
        let actor = ck.checkpoint.actor()?;
        let outcome = evaluate(&ck.checkpoint.env, regime, |s| actor.act_or_nan(s), episodes, seed);
        write_out(success_rate, outcome.success_rate);
        write_out(successes, outcome.successes);
        write_out(non_finite, outcome.non_finite);
        Ok(())
    })
}

/// A fresh environment with default parameters. Call [`mg_env_reset`]
/// before stepping.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_env_new(task: u32, out: *mut *mut MgEnv) -> MgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = EnvSpec::for_task(task_from(task)?);
        let state = vec![0.0; spec.state_dim()];
        *out = Box::into_raw(Box::new(MgEnv { spec, state }));
        Ok(())
    })
}

/// The environment a checkpoint was trained on.
///
/// # Safety
/// `ck` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_env_from_checkpoint(ck: *const MgCheckpoint, out: *mut *mut MgEnv) -> MgStatus {
    guard(|| {
        let ck = ck.as_ref().ok_or_else(|| null("checkpoint"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = ck.checkpoint.env.clone();
        let state = vec![0.0; spec.state_dim()];
        *out = Box::into_raw(Box::new(MgEnv { spec, state }));
        Ok(())
    })
}

/// # Safety
/// `env` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mg_env_free(env: *mut MgEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle; outputs NULL or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_env_dims(env: *const MgEnv, state_dim: *mut usize, action_dim: *mut usize) -> MgStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        write_out(state_dim, env.spec.state_dim());
        write_out(action_dim, env.spec.action_dim());
        Ok(())
    })
}

/// Samples a start state from `regime` with `seed` and writes it to `state`.
/// The same seed gives the same start as the Rust evaluator.
///
/// # Safety
/// `env` must be a live handle; `state` valid for `state_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_env_reset(env: *mut MgEnv, regime: u32, seed: u64, state: *mut f64, state_len: usize) -> MgStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let regime = regime_from(regime)?;
        expect_len("state", env.spec.state_dim(), state_len)?;
        let out = out_slice(state, state_len, "state")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        env.state = env.spec.reset(regime, &mut rng);
        out.copy_from_slice(&env.state);
        Ok(())
    })
}

/// Applies `action` to the current state, writes the next state and
/// whether it meets the success condition.
///
/// # Safety
/// `env` must be a live handle; buffers valid for their stated lengths;
/// `success` NULL or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_env_step(
    env: *mut MgEnv,
    action: *const f64,
    action_len: usize,
    state: *mut f64,
    state_len: usize,
    success: *mut bool,
) -> MgStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        expect_len("action", env.spec.action_dim(), action_len)?;
        expect_len("state", env.spec.state_dim(), state_len)?;
        let a = in_slice(action, action_len, "action")?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Failure::new(MgStatus::NonFinite, "action has non-finite entries"));
        }
        let out = out_slice(state, state_len, "state")?;
        env.state = env.spec.step(&env.state, a);
        out.copy_from_slice(&env.state);
        write_out(success, env.spec.is_success(&env.state));
        Ok(())
    })
}

/// Scripted expert action for `state` (not necessarily the current one).
///
/// # Safety
/// `env` must be a live handle; buffers valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mg_env_expert_action(
    env: *const MgEnv,
    state: *const f64,
    state_len: usize,
    action: *mut f64,
    action_len: usize,
) -> MgStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        expect_len("state", env.spec.state_dim(), state_len)?;
        expect_len("action", env.spec.action_dim(), action_len)?;
        let s = in_slice(state, state_len, "state")?;
        let out = out_slice(action, action_len, "action")?;
        out.copy_from_slice(&env.spec.expert_action(s));
        Ok(())
    })
}

/// Projects `input` onto the probability simplex with softmax or sparsemax.
/// `input` and `output` may alias.
///
/// # Safety
/// Both buffers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_normalize(norm: u32, input: *const f64, output: *mut f64, len: usize) -> MgStatus {
    guard(|| {
        let norm = match norm {
            MG_NORM_SOFTMAX => Normalization::Softmax,
            MG_NORM_SPARSEMAX => Normalization::Sparsemax,
            _ => return Err(Failure::new(MgStatus::InvalidArgument, format!("unknown normalization code {norm}"))),
        };
        if len == 0 {
            return Err(Failure::new(MgStatus::InvalidArgument, "len must be positive"));
        }
        let v = in_slice(input, len, "input")?.to_vec();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Failure::new(MgStatus::NonFinite, "input has non-finite entries"));
        }
        let p = norm.apply(&v);
        out_slice(output, len, "output")?.copy_from_slice(&p);
        Ok(())
    })
}
