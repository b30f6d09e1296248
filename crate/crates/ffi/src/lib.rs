//! C ABI over `coupled-splitting`.
//!
//! Objects cross the boundary as opaque handles (`CsInstance`, `CsTrace`,
//! `CsReport`) that the caller releases with the matching `*_free`. Every
//! fallible call returns a [`CsStatus`]; on failure the message is available
//! from [`cs_last_error`] until the next failing call on the same thread.
//! Strings returned through `char **` are owned by the caller and released with
//! [`cs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coupled_splitting::error::Error;
use coupled_splitting::io;
use coupled_splitting::solver::{self, SolverConfig, Status, Trace, Variant};
use coupled_splitting::spectral::{self, SpectralReport};
use coupled_splitting::ProblemInstance;
use nalgebra::DVector;

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or an instance that fails structural validation.
    InvalidInstance = 3,
    InvalidParameter = 4,
    /// A convergence or well-posedness condition does not hold.
    ConditionViolated = 5,
    Unsupported = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// Terminal state of a solver run.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsRunStatus {
    Converged = 0,
    MaxIter = 1,
    Diverged = 2,
}

pub struct CsInstance {
    instance: ProblemInstance,
    x0: DVector<f64>,
    mu0: DVector<f64>,
}

pub struct CsTrace {
    trace: Trace,
}

pub struct CsReport {
    report: SpectralReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CsStatus {
    match err {
        Error::Structural { .. } | Error::Json(_) | Error::Io(_) => CsStatus::InvalidInstance,
        Error::Usage(_) | Error::InvalidParameter(_) | Error::Domain(_) => CsStatus::InvalidParameter,
        Error::Condition { .. } | Error::Infeasible(_) => CsStatus::ConditionViolated,
        Error::Unsupported(_) => CsStatus::Unsupported,
        Error::Certificate(_) | Error::Numerical(_) => CsStatus::Numerical,
    }
}

fn fail(status: CsStatus, msg: impl Into<String>) -> CsStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to a status code.
fn guard(f: impl FnOnce() -> Result<(), CsStatus>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(CsStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: coupled_splitting::Result<T>) -> Result<T, CsStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, CsStatus> {
    if s.is_null() {
        return Err(fail(CsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, CsStatus> {
    p.as_ref()
        .ok_or_else(|| fail(CsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), CsStatus> {
    if out.is_null() {
        return Err(fail(CsStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), CsStatus> {
    let c = CString::new(s).map_err(|_| fail(CsStatus::Numerical, "string contains NUL"))?;
    put(out, c.into_raw(), "out")
}

/// Copies `v` into `buf[0..len)`. `*written` always receives `v.len()`, so a
/// call with `len = 0` queries the size.
unsafe fn copy_out(v: &[f64], buf: *mut f64, len: usize, written: *mut usize) -> Result<(), CsStatus> {
    put(written, v.len(), "written")?;
    if len < v.len() {
        return Err(fail(
            CsStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", v.len()),
        ));
    }
    if buf.is_null() {
        return Err(fail(CsStatus::NullPointer, "buf is null"));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    Ok(())
}

/// Message of the last failing call on this thread, or null. Owned by the
/// library; valid until the next failing call.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an instance document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_instance_from_json(json: *const c_char, out: *mut *mut CsInstance) -> CsStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let loaded = lift(io::parse_instance(text))?;
        let handle = Box::new(CsInstance {
            instance: loaded.instance,
            x0: loaded.x0,
            mu0: loaded.mu0,
        });
        put(out, Box::into_raw(handle), "out")
    })
}

/// # Safety
/// `inst` must be null or a handle from [`cs_instance_from_json`].
#[no_mangle]
pub unsafe extern "C" fn cs_instance_free(inst: *mut CsInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of blocks, total primal dimension and number of constraints.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_instance_dims(
    inst: *const CsInstance,
    n: *mut usize,
    d: *mut usize,
    m: *mut usize,
) -> CsStatus {
    guard(|| {
        let inst = &deref(inst, "inst")?.instance;
        put(n, inst.n(), "n")?;
        put(d, inst.d(), "d")?;
        put(m, inst.m(), "m")
    })
}

/// Runs `variant` (`admm2`, `admm2_linearized`, `admm_cyclic_n`, `bcd` or
/// `bcpg`) from the instance's starting point. A diverged run still returns a
/// trace; check [`cs_trace_status`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_solve(
    inst: *const CsInstance,
    variant: *const c_char,
    beta: f64,
    gamma: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut CsTrace,
) -> CsStatus {
    guard(|| {
        let h = deref(inst, "inst")?;
        let name = read_str(variant, "variant")?;
        let variant: Variant = name
            .parse()
            .map_err(|_| fail(CsStatus::InvalidParameter, format!("unknown variant `{name}`")))?;
        let cfg = SolverConfig::new(variant)
            .with_beta(beta)
            .with_gamma(gamma)
            .with_tol(tol)
            .with_max_iter(max_iter);
        let trace = lift(solver::run_solver(&h.instance, &cfg, &h.x0, &h.mu0, None))?;
        put(out, Box::into_raw(Box::new(CsTrace { trace })), "out")
    })
}

/// # Safety
/// `trace` must be null or a handle from [`cs_solve`].
#[no_mangle]
pub unsafe extern "C" fn cs_trace_free(trace: *mut CsTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_status(trace: *const CsTrace, status: *mut CsRunStatus) -> CsStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.trace;
        let s = match t.status {
            Status::Converged => CsRunStatus::Converged,
            Status::MaxIter => CsRunStatus::MaxIter,
            Status::Diverged => CsRunStatus::Diverged,
        };
        put(status, s, "status")
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_iterations(trace: *const CsTrace, k: *mut usize) -> CsStatus {
    guard(|| put(k, deref(trace, "trace")?.trace.iterations(), "k"))
}

/// Largest residual component of the final record.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_residual(trace: *const CsTrace, value: *mut f64) -> CsStatus {
    guard(|| {
        let r = deref(trace, "trace")?.trace.last().max_residual().unwrap_or(f64::NAN);
        put(value, r, "value")
    })
}

/// Final primal iterate.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_x(trace: *const CsTrace, buf: *mut f64, len: usize, written: *mut usize) -> CsStatus {
    guard(|| copy_out(deref(trace, "trace")?.trace.final_state.x.as_slice(), buf, len, written))
}

/// Final multiplier.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_mu(trace: *const CsTrace, buf: *mut f64, len: usize, written: *mut usize) -> CsStatus {
    guard(|| copy_out(deref(trace, "trace")?.trace.final_state.mu.as_slice(), buf, len, written))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_to_csv(trace: *const CsTrace, out: *mut *mut c_char) -> CsStatus {
    guard(|| {
        let csv = deref(trace, "trace")?.trace.to_csv(&[]);
        put_string(out, csv)
    })
}

/// Builds the expected randomly permuted update and its spectral checks.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_analyze(inst: *const CsInstance, beta: f64, out: *mut *mut CsReport) -> CsStatus {
    guard(|| {
        let h = deref(inst, "inst")?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(fail(CsStatus::InvalidParameter, format!("beta must be positive, got {beta}")));
        }
        let report = lift(spectral::analyze(&h.instance, beta))?;
        put(out, Box::into_raw(Box::new(CsReport { report })), "out")
    })
}

/// # Safety
/// `report` must be null or a handle from [`cs_analyze`].
#[no_mangle]
pub unsafe extern "C" fn cs_report_free(report: *mut CsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_report_spectral_radius(report: *const CsReport, rho: *mut f64) -> CsStatus {
    guard(|| put(rho, deref(report, "report")?.report.rho_m, "rho"))
}

/// Looks up a verdict by its report key (`lemma_3_1`, ..., `prop_3_1`).
/// Writes 1 (holds), 0 (fails) or -1 (not applicable).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_report_verdict(report: *const CsReport, name: *const c_char, value: *mut i32) -> CsStatus {
    guard(|| {
        let v = &deref(report, "report")?.report.verdicts;
        let key = read_str(name, "name")?;
        let b = match key {
            "lemma_3_1" => Some(v.lemma_3_1),
            "lemma_3_3" => Some(v.lemma_3_3),
            "lemma_3_4" => Some(v.lemma_3_4),
            "lemma_3_5" => Some(v.lemma_3_5),
            "prop_3_1" => v.prop_3_1,
            _ => return Err(fail(CsStatus::InvalidParameter, format!("unknown verdict `{key}`"))),
        };
        put(value, b.map_or(-1, i32::from), "value")
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_report_to_json(report: *const CsReport, out: *mut *mut c_char) -> CsStatus {
    guard(|| {
        let json = lift(deref(report, "report")?.report.to_json())?;
        put_string(out, json)
    })
}
