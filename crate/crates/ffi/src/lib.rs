//! C bindings for policy specs, parameter initialization, the
//! decision-transformer context, the toy environments and checkpoints.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load` function and released by the matching `*_free`. Every
//! fallible call returns an [`EsdtStatus`]; on failure the message is kept
//! per thread and can be read with [`esdt_last_error_message`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use esdt::cli::Checkpoint;
use esdt::dt::{init_context, EpisodeContext, RtgConfig};
use esdt::envs::{Env, EnvKind};
use esdt::nn::{init_params, param_count, unflatten, DtSpec, PolicySpec, PolicyView};
use esdt::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsdtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Layout = 4,
    Contract = 5,
    Decode = 6,
    Io = 7,
    Transport = 8,
    Panic = 9,
}

/// Policy architecture.
pub struct EsdtSpec(PolicySpec);
/// Rolling decision-transformer episode context.
pub struct EsdtContext(EpisodeContext);
/// One of the built-in environments.
pub struct EsdtEnv(Box<dyn Env>);
/// Loaded checkpoint.
pub struct EsdtCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EsdtStatus {
    match err {
        Error::Spec(_) | Error::Config(_) => EsdtStatus::InvalidArgument,
        Error::Layout { .. } => EsdtStatus::Layout,
        Error::Shape { .. } => EsdtStatus::Shape,
        Error::Contract(_) => EsdtStatus::Contract,
        Error::Decode(_) => EsdtStatus::Decode,
        Error::Io(_) => EsdtStatus::Io,
        Error::Transport(_) | Error::WorkerFailure(_) => EsdtStatus::Transport,
    }
}

struct Fail(EsdtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EsdtStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> EsdtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EsdtStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            EsdtStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(
    p: *mut f64,
    len: usize,
    needed: usize,
    what: &str,
) -> Result<&'a mut [f64], Fail> {
    if len != needed {
        return Err(Fail(
            EsdtStatus::Shape,
            format!("{what}: buffer holds {len} values, {needed} required"),
        ));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(EsdtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn esdt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn esdt_spec_feedforward(
    obs_dim: usize,
    hidden: *const usize,
    n_hidden: usize,
    act_dim: usize,
    out: *mut *mut EsdtSpec,
) -> EsdtStatus {
    guard(|| {
        let hidden = if n_hidden == 0 {
            Vec::new()
        } else if hidden.is_null() {
            return Err(null("hidden"));
        } else {
            slice::from_raw_parts(hidden, n_hidden).to_vec()
        };
        let spec = PolicySpec::feedforward(obs_dim, hidden, act_dim);
        spec.validate()?;
        put(out, EsdtSpec(spec))
    })
}

#[allow(clippy::too_many_arguments)]
#[no_mangle]
pub unsafe extern "C" fn esdt_spec_decision_transformer(
    obs_dim: usize,
    act_dim: usize,
    embed_dim: usize,
    n_layers: usize,
    n_heads: usize,
    context_len: usize,
    ff_dim: usize,
    max_ep_len: usize,
    out: *mut *mut EsdtSpec,
) -> EsdtStatus {
    guard(|| {
        let spec = PolicySpec::decision_transformer(
            obs_dim,
            act_dim,
            DtSpec {
                embed_dim,
                n_layers,
                n_heads,
                context_len,
                ff_dim,
                max_ep_len,
            },
        );
        spec.validate()?;
        put(out, EsdtSpec(spec))
    })
}

#[no_mangle]
pub unsafe extern "C" fn esdt_spec_free(spec: *mut EsdtSpec) {
    free(spec)
}

#[no_mangle]
pub unsafe extern "C" fn esdt_spec_param_count(
    spec: *const EsdtSpec,
    out: *mut usize,
) -> EsdtStatus {
    guard(|| {
        let spec = as_ref(spec, "spec")?;
        *as_mut(out, "out")? = param_count(&spec.0)?;
        Ok(())
    })
}

/// Writes a seeded initialization into `params`, which must hold exactly
/// `esdt_spec_param_count` values.
#[no_mangle]
pub unsafe extern "C" fn esdt_init_params(
    spec: *const EsdtSpec,
    seed: u64,
    params: *mut f64,
    len: usize,
) -> EsdtStatus {
    guard(|| {
        let spec = as_ref(spec, "spec")?;
        let theta = init_params(&spec.0, seed)?;
        out_slice(params, len, theta.len(), "params")?.copy_from_slice(theta.as_slice());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn esdt_context_new(
    target_return: f64,
    scale: f64,
    capacity: usize,
    out: *mut *mut EsdtContext,
) -> EsdtStatus {
    guard(|| {
        let ctx = init_context(RtgConfig::new(target_return, scale)?, capacity)?;
        put(out, EsdtContext(ctx))
    })
}

#[no_mangle]
pub unsafe extern "C" fn esdt_context_free(ctx: *mut EsdtContext) {
    free(ctx)
}

/// Appends one step; the return-to-go drops by `reward / scale`.
#[no_mangle]
pub unsafe extern "C" fn esdt_context_record_step(
    ctx: *mut EsdtContext,
    obs: *const f64,
    obs_len: usize,
    action: *const f64,
    act_len: usize,
    reward: f64,
) -> EsdtStatus {
    guard(|| {
        let ctx = as_mut(ctx, "context")?;
        let obs = in_slice(obs, obs_len, "obs")?;
        let action = in_slice(action, act_len, "action")?;
        ctx.0.record_step(obs, action, reward);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn esdt_context_current_rtg(
    ctx: *const EsdtContext,
    out: *mut f64,
) -> EsdtStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(ctx, "context")?.0.current_rtg();
        Ok(())
    })
}

/// Action of the policy for `obs`. `ctx` is required for decision
/// transformers and ignored (may be null) for feedforward policies.
#[allow(clippy::too_many_arguments)]
#[no_mangle]
pub unsafe extern "C" fn esdt_policy_act(
    spec: *const EsdtSpec,
    params: *const f64,
    n_params: usize,
    ctx: *const EsdtContext,
    obs: *const f64,
    obs_len: usize,
    action: *mut f64,
    act_len: usize,
) -> EsdtStatus {
    guard(|| {
        let spec = &as_ref(spec, "spec")?.0;
        let params = in_slice(params, n_params, "params")?;
        let obs = in_slice(obs, obs_len, "obs")?;
        if obs.len() != spec.obs_dim {
            return Err(Fail(
                EsdtStatus::Shape,
                format!("obs has {} values, {} required", obs.len(), spec.obs_dim),
            ));
        }
        let a = match unflatten(params, spec)? {
            PolicyView::Feedforward(m) => m.forward(obs),
            PolicyView::Transformer(v) => v.act(&as_ref(ctx, "context")?.0, obs)?,
        };
        out_slice(action, act_len, a.len(), "action")?.copy_from_slice(&a);
        Ok(())
    })
}

/// Creates an environment by name (`point_target` or `key_corridor`).
#[no_mangle]
pub unsafe extern "C" fn esdt_env_new(name: *const c_char, out: *mut *mut EsdtEnv) -> EsdtStatus {
    guard(|| {
        let kind: EnvKind = c_str(name, "name")?.parse()?;
        put(out, EsdtEnv(kind.make()))
    })
}

#[no_mangle]
pub unsafe extern "C" fn esdt_env_free(env: *mut EsdtEnv) {
    free(env)
}

#[no_mangle]
pub unsafe extern "C" fn esdt_env_obs_dim(env: *const EsdtEnv) -> usize {
    env.as_ref().map_or(0, |e| e.0.obs_dim())
}

#[no_mangle]
pub unsafe extern "C" fn esdt_env_act_dim(env: *const EsdtEnv) -> usize {
    env.as_ref().map_or(0, |e| e.0.act_dim())
}

#[no_mangle]
pub unsafe extern "C" fn esdt_env_reset(
    env: *mut EsdtEnv,
    seed: u64,
    obs: *mut f64,
    obs_len: usize,
) -> EsdtStatus {
    guard(|| {
        let env = as_mut(env, "env")?;
        let o = env.0.reset(seed);
        out_slice(obs, obs_len, o.len(), "obs")?.copy_from_slice(&o);
        Ok(())
    })
}

#[allow(clippy::too_many_arguments)]
#[no_mangle]
pub unsafe extern "C" fn esdt_env_step(
    env: *mut EsdtEnv,
    action: *const f64,
    act_len: usize,
    obs: *mut f64,
    obs_len: usize,
    reward: *mut f64,
    done: *mut bool,
) -> EsdtStatus {
    guard(|| {
        let env = as_mut(env, "env")?;
        let action = in_slice(action, act_len, "action")?;
        let reward = as_mut(reward, "reward")?;
        let done = as_mut(done, "done")?;
        let step = env.0.step(action)?;
        out_slice(obs, obs_len, step.obs.len(), "obs")?.copy_from_slice(&step.obs);
        *reward = step.reward;
        *done = step.done;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn esdt_checkpoint_load(
    path: *const c_char,
    out: *mut *mut EsdtCheckpoint,
) -> EsdtStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        put(out, EsdtCheckpoint(Checkpoint::load(Path::new(path))?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn esdt_checkpoint_free(ckpt: *mut EsdtCheckpoint) {
    free(ckpt)
}

/// Number of parameters stored in the checkpoint.
#[no_mangle]
pub unsafe extern "C" fn esdt_checkpoint_param_count(ckpt: *const EsdtCheckpoint) -> usize {
    ckpt.as_ref().map_or(0, |c| c.0.state.theta.len())
}

#[no_mangle]
pub unsafe extern "C" fn esdt_checkpoint_params(
    ckpt: *const EsdtCheckpoint,
    params: *mut f64,
    len: usize,
) -> EsdtStatus {
    guard(|| {
        let c = as_ref(ckpt, "checkpoint")?;
        let theta = c.0.state.theta.as_slice();
        out_slice(params, len, theta.len(), "params")?.copy_from_slice(theta);
        Ok(())
    })
}

/// New spec handle describing the checkpoint's architecture.
#[no_mangle]
pub unsafe extern "C" fn esdt_checkpoint_spec(
    ckpt: *const EsdtCheckpoint,
    out: *mut *mut EsdtSpec,
) -> EsdtStatus {
    guard(|| {
        let c = as_ref(ckpt, "checkpoint")?;
        put(out, EsdtSpec(c.0.spec.clone()))
    })
}
