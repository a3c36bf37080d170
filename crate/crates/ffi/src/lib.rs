//! C ABI over `maas-core`.
//!
//! A `MaasSession` owns a built network and the results computed so far.
//! Every call returns a `MaasStatus`; on failure the message is kept per
//! thread and read back with `maas_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use maas_core::bilevel::{solve_assignment, solve_base, AssignmentResult, BaseScenario};
use maas_core::network::Network;
use maas_core::pipeline::RunConfig;
use maas_core::pricing::{pricing_inputs, solve_pricing, PricingOutcome};
use maas_core::MaasError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaasStatus {
    Ok = 0,
    Error = 1,
    NotConverged = 2,
    Infeasible = 3,
    Config = 4,
    NullPointer = 5,
    /// A required earlier step has not run.
    State = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque session handle.
pub struct MaasSession {
    config: RunConfig,
    net: Network,
    base: Option<BaseScenario>,
    assignment: Option<AssignmentResult>,
    pricing: Option<PricingOutcome>,
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

fn status_of(e: &MaasError) -> MaasStatus {
    match e {
        MaasError::Infeasible(_) => MaasStatus::Infeasible,
        MaasError::Divergence { .. } | MaasError::SingularService { .. } => MaasStatus::NotConverged,
        MaasError::State(_) => MaasStatus::State,
        MaasError::Config(_) | MaasError::Build(_) | MaasError::Domain(_) | MaasError::Shape(_) | MaasError::Json(_) => {
            MaasStatus::Config
        }
        _ => MaasStatus::Error,
    }
}

fn guard(f: impl FnOnce() -> Result<MaasStatus, (MaasStatus, String)>) -> MaasStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside maas-core");
            MaasStatus::Panic
        }
    }
}

fn core<T>(r: maas_core::Result<T>) -> Result<T, (MaasStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn session<'a>(h: *mut MaasSession) -> Result<&'a mut MaasSession, (MaasStatus, String)> {
    h.as_mut().ok_or((MaasStatus::NullPointer, "session handle is null".into()))
}

fn missing(what: &str) -> (MaasStatus, String) {
    (MaasStatus::State, format!("{what} has not been computed"))
}

/// Builds a session from a run configuration in JSON.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn maas_session_new(config_json: *const c_char, out: *mut *mut MaasSession) -> MaasStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return Err((MaasStatus::NullPointer, "config or output pointer is null".into()));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| (MaasStatus::Config, format!("config is not UTF-8: {e}")))?;
        let config: RunConfig = core(serde_json::from_str(text).map_err(MaasError::from))?;
        let net = core(config.build())?;
        let s = MaasSession { config, net, base: None, assignment: None, pricing: None };
        *out = Box::into_raw(Box::new(s));
        Ok(MaasStatus::Ok)
    })
}

/// # Safety
/// `h` must come from `maas_session_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn maas_session_free(h: *mut MaasSession) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of OD pairs, the length of every per-OD array.
///
/// # Safety
/// `h` must be a live session and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn maas_od_count(h: *mut MaasSession, out: *mut usize) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let out = out.as_mut().ok_or((MaasStatus::NullPointer, "output pointer is null".into()))?;
        *out = s.net.n_od();
        Ok(MaasStatus::Ok)
    })
}

/// Solves the scenario without the platform. Returns `NotConverged` when the
/// outer loop hit its limit; the result is still stored.
///
/// # Safety
/// `h` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn maas_solve_base(h: *mut MaasSession) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let params = core(s.config.params(&s.net))?;
        let base = core(solve_base(&s.net, &params))?;
        let converged = base.result.converged;
        s.base = Some(base);
        s.assignment = None;
        s.pricing = None;
        Ok(if converged { MaasStatus::Ok } else { MaasStatus::NotConverged })
    })
}

/// Solves the MaaS assignment from the stored base.
///
/// # Safety
/// `h` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn maas_solve_assignment(h: *mut MaasSession) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let base = s.base.as_ref().ok_or_else(|| missing("base scenario"))?;
        let params = core(s.config.params(&s.net))?;
        let res = core(solve_assignment(&s.net, &params, Some(base)))?;
        let converged = res.converged;
        s.assignment = Some(res);
        s.pricing = None;
        Ok(if converged { MaasStatus::Ok } else { MaasStatus::NotConverged })
    })
}

/// Optimal pricing at capacity price weight `eta`.
///
/// # Safety
/// `h` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn maas_solve_pricing(h: *mut MaasSession, eta: f64) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let base = s.base.as_ref().ok_or_else(|| missing("base scenario"))?;
        let assign = s.assignment.as_ref().ok_or_else(|| missing("assignment"))?;
        let inputs = core(pricing_inputs(&s.net, assign, base, eta))?;
        s.pricing = Some(core(solve_pricing(&inputs))?);
        Ok(MaasStatus::Ok)
    })
}

fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<MaasStatus, (MaasStatus, String)> {
    if out.is_null() {
        return Err((MaasStatus::NullPointer, "output buffer is null".into()));
    }
    if len < src.len() {
        return Err((MaasStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", src.len())));
    }
    // SAFETY: caller promises `len` writable doubles at `out`.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    Ok(MaasStatus::Ok)
}

/// Copies the MaaS demand per OD into `out` (at least `maas_od_count` slots).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn maas_assignment_demand(h: *mut MaasSession, out: *mut f64, len: usize) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let a = s.assignment.as_ref().ok_or_else(|| missing("assignment"))?;
        copy_out(&a.q, out, len)
    })
}

/// Total system travel time of the stored assignment.
///
/// # Safety
/// `h` must be a live session and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn maas_assignment_objective(h: *mut MaasSession, out: *mut f64) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let a = s.assignment.as_ref().ok_or_else(|| missing("assignment"))?;
        let out = out.as_mut().ok_or((MaasStatus::NullPointer, "output pointer is null".into()))?;
        *out = a.objective;
        Ok(MaasStatus::Ok)
    })
}

/// Capacity price `ps` and platform profit of the stored pricing.
///
/// # Safety
/// `h` must be a live session; `ps` and `profit` writable.
#[no_mangle]
pub unsafe extern "C" fn maas_pricing_result(h: *mut MaasSession, ps: *mut f64, profit: *mut f64) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let p = s.pricing.as_ref().ok_or_else(|| missing("pricing"))?;
        if ps.is_null() || profit.is_null() {
            return Err((MaasStatus::NullPointer, "output pointer is null".into()));
        }
        *ps = p.scheme.ps;
        *profit = p.profit;
        Ok(MaasStatus::Ok)
    })
}

/// Per-OD trip fares of the stored pricing.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn maas_pricing_fares(h: *mut MaasSession, out: *mut f64, len: usize) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let p = s.pricing.as_ref().ok_or_else(|| missing("pricing"))?;
        copy_out(&p.scheme.pd, out, len)
    })
}

/// Stored assignment as JSON. Free the string with `maas_string_free`.
///
/// # Safety
/// `h` must be a live session and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn maas_assignment_json(h: *mut MaasSession, out: *mut *mut c_char) -> MaasStatus {
    guard(|| {
        let s = session(h)?;
        let out = out.as_mut().ok_or((MaasStatus::NullPointer, "output pointer is null".into()))?;
        *out = ptr::null_mut();
        let a = s.assignment.as_ref().ok_or_else(|| missing("assignment"))?;
        let text = core(serde_json::to_string(a).map_err(MaasError::from))?;
        *out = CString::new(text).map_err(|e| (MaasStatus::Error, e.to_string()))?.into_raw();
        Ok(MaasStatus::Ok)
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn maas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn maas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_handle_sets_message() {
        let st = unsafe { maas_solve_base(ptr::null_mut()) };
        assert_eq!(st, MaasStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(maas_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("null"));
    }

    #[test]
    fn bad_json_is_config_error() {
        let cfg = CString::new("{not json").unwrap();
        let mut h = ptr::null_mut();
        let st = unsafe { maas_session_new(cfg.as_ptr(), &mut h) };
        assert_eq!(st, MaasStatus::Config);
        assert!(h.is_null());
        assert!(!maas_last_error_message().is_null());
    }
}
