//! C ABI over `schauder-lab`.
//!
//! Every fallible entry point returns an [`SlStatus`]; on failure the message
//! is available from [`sl_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.
//! Panics never cross the boundary; they surface as [`SlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use schauder_lab::error::Error;
use schauder_lab::fk::{fk_estimate, McConfig};
use schauder_lab::lab::{run_experiment, summary_json, ExperimentConfig};
use schauder_lab::model::{catalog, ChainProblem};
use schauder_lab::proxy::{FrozenProxy, ProxyConfig};
use schauder_lab::solver::{parametrix_solve, GridSpec, SampledField, SolverConfig};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Shape = 5,
    Ordering = 6,
    Numerical = 7,
    Unsupported = 8,
    NonConvergence = 9,
    Io = 10,
    Json = 11,
    Model = 12,
    Panic = 13,
}

impl From<&Error> for SlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } => SlStatus::Config,
            Error::Domain(_) => SlStatus::Domain,
            Error::Shape { .. } => SlStatus::Shape,
            Error::Ordering(_) => SlStatus::Ordering,
            Error::Numerical(_) | Error::Extrapolation(_) => SlStatus::Numerical,
            Error::Unsupported(_) => SlStatus::Unsupported,
            Error::NonConvergence { .. } => SlStatus::NonConvergence,
            Error::Io(_) => SlStatus::Io,
            Error::Json(_) => SlStatus::Json,
            Error::Model(_) => SlStatus::Model,
        }
    }
}

/// Chain problem built from the catalog.
pub struct SlProblem {
    inner: ChainProblem,
}

/// Frozen Gaussian proxy.
pub struct SlProxy {
    inner: FrozenProxy,
}

/// Solved field on a grid.
pub struct SlField {
    inner: SampledField,
    iterations: usize,
    converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(SlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SlStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside schauder-lab");
            SlStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SlStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SlStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: callers pass either null or a writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn sl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a catalog problem. `params_json` may be null for defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_problem_new(
    id: *const c_char,
    params_json: *const c_char,
    gamma: f64,
    horizon: f64,
    out: *mut *mut SlProblem,
) -> SlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let id = str_arg(id, "id")?;
        let params = if params_json.is_null() {
            serde_json::Value::Null
        } else {
            serde_json::from_str(str_arg(params_json, "params_json")?).map_err(Error::from)?
        };
        let inner = catalog::build(id, &params, gamma, horizon)?;
        *out = Box::into_raw(Box::new(SlProblem { inner }));
        Ok(())
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// `p` must come from [`sl_problem_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sl_problem_free(p: *mut SlProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// State dimension `n * d`, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_problem_dim(p: *const SlProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.nd())
}

/// Frozen proxy with freezing point `(tau, xi)` on `[tau, t_end]`.
///
/// # Safety
/// `xi` must hold `xi_len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_proxy_new(
    problem: *const SlProblem,
    tau: f64,
    xi: *const f64,
    xi_len: usize,
    t_end: f64,
    out: *mut *mut SlProxy,
) -> SlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = ref_arg(problem, "problem")?;
        let xi = slice_arg(xi, xi_len, "xi")?;
        let inner = FrozenProxy::new(&p.inner, tau, xi, t_end, ProxyConfig::default())?;
        *out = Box::into_raw(Box::new(SlProxy { inner }));
        Ok(())
    })
}

/// Releases a proxy; null is ignored.
///
/// # Safety
/// `p` must come from [`sl_proxy_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sl_proxy_free(p: *mut SlProxy) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Proxy density `p(t, s, x, y)`.
///
/// # Safety
/// `x` and `y` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_proxy_density(
    proxy: *const SlProxy,
    t: f64,
    s: f64,
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> SlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let px = ref_arg(proxy, "proxy")?;
        let x = slice_arg(x, len, "x")?;
        let y = slice_arg(y, len, "y")?;
        *out = px.inner.density(t, s, x, y, &[])?;
        Ok(())
    })
}

/// Proxy covariance `K(t, s)` written row-major into `out` (`cap >= nd * nd`).
///
/// # Safety
/// `out` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn sl_proxy_covariance(proxy: *const SlProxy, t: f64, s: f64, out: *mut f64, cap: usize) -> SlStatus {
    guard(|| {
        let px = ref_arg(proxy, "proxy")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let k = px.inner.covariance(t, s)?;
        let nd = k.nrows();
        if cap < nd * nd {
            return Err(Fail(SlStatus::Shape, format!("need room for {} values, got {cap}", nd * nd)));
        }
        let buf = std::slice::from_raw_parts_mut(out, nd * nd);
        for i in 0..nd {
            for j in 0..nd {
                buf[i * nd + j] = k[(i, j)];
            }
        }
        Ok(())
    })
}

/// Parametrix solve. `grid_json` follows the `grid` block of an experiment
/// config; `solver_json` may be null for defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_solve(
    problem: *const SlProblem,
    grid_json: *const c_char,
    solver_json: *const c_char,
    out: *mut *mut SlField,
) -> SlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = ref_arg(problem, "problem")?;
        let grid: GridSpec = serde_json::from_str(str_arg(grid_json, "grid_json")?).map_err(Error::from)?;
        let cfg: SolverConfig = if solver_json.is_null() {
            SolverConfig::default()
        } else {
            serde_json::from_str(str_arg(solver_json, "solver_json")?).map_err(Error::from)?
        };
        let sol = parametrix_solve(&p.inner, &grid, &cfg)?;
        *out = Box::into_raw(Box::new(SlField { inner: sol.field, iterations: sol.iterations, converged: sol.converged }));
        Ok(())
    })
}

/// Releases a field; null is ignored.
///
/// # Safety
/// `f` must come from [`sl_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sl_field_free(f: *mut SlField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Interpolated value `u(t, x)`.
///
/// # Safety
/// `x` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_field_eval(field: *const SlField, t: f64, x: *const f64, len: usize, out: *mut f64) -> SlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = ref_arg(field, "field")?;
        let x = slice_arg(x, len, "x")?;
        let nd = f.inner.dims.nd();
        if len != nd {
            return Err(Fail(SlStatus::Shape, format!("expected {nd} coordinates, got {len}")));
        }
        *out = f.inner.eval(t, x);
        Ok(())
    })
}

/// Picard iterations used, and whether the iteration converged.
///
/// # Safety
/// Output pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sl_field_info(field: *const SlField, iterations: *mut usize, converged: *mut bool) -> SlStatus {
    guard(|| {
        let f = ref_arg(field, "field")?;
        if let Some(it) = iterations.as_mut() {
            *it = f.iterations;
        }
        if let Some(c) = converged.as_mut() {
            *c = f.converged;
        }
        Ok(())
    })
}

/// Feynman–Kac Monte Carlo estimate of `u(t, x)` with its 95% half-width.
///
/// # Safety
/// `x` must hold `len` values; output pointers must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sl_fk_estimate(
    problem: *const SlProblem,
    t: f64,
    x: *const f64,
    len: usize,
    paths: usize,
    steps: usize,
    seed: u64,
    antithetic: bool,
    estimate: *mut f64,
    halfwidth: *mut f64,
) -> SlStatus {
    guard(|| {
        let est_out = out_arg(estimate, "estimate")?;
        let hw_out = out_arg(halfwidth, "halfwidth")?;
        let p = ref_arg(problem, "problem")?;
        let x = slice_arg(x, len, "x")?;
        let r = fk_estimate(&p.inner, t, x, &McConfig { paths, steps, seed, antithetic })?;
        *est_out = r.estimate;
        *hw_out = r.halfwidth;
        Ok(())
    })
}

/// Runs an experiment from its JSON config. On success `summary_out`
/// receives the summary JSON (free with [`sl_string_free`]) and `exit_code`
/// the CLI exit code (0 all pass, 2 some diagnostic failed).
///
/// # Safety
/// `config_json` must be NUL-terminated; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_run_experiment(config_json: *const c_char, summary_out: *mut *mut c_char, exit_code: *mut i32) -> SlStatus {
    guard(|| {
        let summary_out = out_arg(summary_out, "summary_out")?;
        *summary_out = ptr::null_mut();
        let code = out_arg(exit_code, "exit_code")?;
        *code = 1;
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        let outcome = run_experiment(&cfg)?;
        let text = serde_json::to_string(&summary_json(&cfg, &outcome, None)).map_err(Error::from)?;
        *code = outcome.exit_code();
        *summary_out = CString::new(text).map_err(|e| Fail(SlStatus::Json, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
