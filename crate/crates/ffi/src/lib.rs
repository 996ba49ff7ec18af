//! C ABI for `singular-lab`.
//!
//! Every entry point returns an [`SlStatus`]. On failure the message is kept
//! in a thread-local slot readable with [`sl_last_error_message`]. Handles are
//! opaque, created by `*_new` functions and released by the matching `*_free`.
//! Panics never cross the boundary; they surface as [`SlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use libc::size_t;

use singular_lab::coefficients::{build_coefficients, smallness_margin, CoefficientField, CoefficientPreset};
use singular_lab::experiment::{run_solve, write_artifacts, ExperimentConfig, RunReport, RunStatus};
use singular_lab::geometry::{build_domain, Domain, DomainSpec};
use singular_lab::green::green_column;
use singular_lab::semilinear::{outer_solve, ProblemSpec, SchemeOptions};
use singular_lab::{Error, GridFunction};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    SolverFailure = 4,
    CertificationFailure = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Coefficient families.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlCoefficientKind {
    Identity = 0,
    /// `A = c I`, parameter `c`.
    Scalar = 1,
    /// `a11 = 1 + ε sin x₁`, parameter `ε`.
    DiagonalSine = 2,
    /// Rotated anisotropy, parameter `ε`.
    RotationMix = 3,
}

/// Grid over a smooth planar domain.
pub struct SlDomain {
    inner: Domain,
}

/// Coefficient field sampled on one domain.
pub struct SlCoefficients {
    inner: CoefficientField,
}

/// Summary of a regularized solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlSolveSummary {
    pub levels: size_t,
    pub final_n: u64,
    pub min_u: f64,
    pub max_u: f64,
    pub final_residual: f64,
    pub monotone: bool,
    pub positive: bool,
}

/// Both variants of the smallness condition.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlSmallness {
    pub value_linear: f64,
    pub value_squared: f64,
    pub poincare_constant: f64,
    pub pass_linear: bool,
    pub pass_squared: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(e: &Error) -> SlStatus {
    match RunStatus::of_error(e) {
        RunStatus::ConfigError => SlStatus::ConfigError,
        _ => SlStatus::SolverFailure,
    }
}

struct Failure(SlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SlStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(SlStatus::InvalidArgument, message.into())
}

/// Runs `body`, recording errors and catching panics.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("panic: {message}"));
            SlStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: size_t, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: size_t, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn expect_len(got: size_t, expected: usize, what: &str) -> Result<(), Failure> {
    if got < expected {
        return Err(Failure(SlStatus::BufferTooSmall, format!("{what} holds {got} values, {expected} needed")));
    }
    Ok(())
}

fn check_pair(domain: &SlDomain, coeff: &SlCoefficients) -> Result<(), Failure> {
    if domain.inner.len() != coeff.inner.len() {
        return Err(invalid("coefficients were built on a different domain"));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf`.
///
/// Returns the message length without the terminator, or 0 when there is
/// none. A `buf` of `cap` bytes receives at most `cap - 1` bytes plus NUL.
///
/// # Safety
/// `buf` must be null or valid for `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sl_last_error_message(buf: *mut c_char, cap: size_t) -> size_t {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn new_domain(spec: DomainSpec, out: *mut *mut SlDomain) -> SlStatus {
    guard(|| {
        let inner = build_domain(&spec)?;
        unsafe { write_out(out, SlDomain { inner }, "out") }
    })
}

/// Disk of the given radius centered at the origin.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn sl_domain_new_disk(radius: f64, h: f64, out: *mut *mut SlDomain) -> SlStatus {
    new_domain(DomainSpec::disk(radius, h), out)
}

/// Ellipse with semi-axes `a`, `b` centered at the origin.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn sl_domain_new_ellipse(a: f64, b: f64, h: f64, out: *mut *mut SlDomain) -> SlStatus {
    new_domain(DomainSpec::ellipse(a, b, h), out)
}

/// # Safety
/// `domain` must be null or a handle from `sl_domain_new_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_domain_free(domain: *mut SlDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Number of interior nodes, 0 for a null handle.
///
/// # Safety
/// `domain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_domain_node_count(domain: *const SlDomain) -> size_t {
    domain.as_ref().map_or(0, |d| d.inner.len())
}

/// Grid spacing, NaN for a null handle.
///
/// # Safety
/// `domain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_domain_spacing(domain: *const SlDomain) -> f64 {
    domain.as_ref().map_or(f64::NAN, |d| d.inner.h())
}

/// Copies node coordinates and boundary distances. Any output may be null.
///
/// # Safety
/// Each non-null output must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_domain_nodes(
    domain: *const SlDomain,
    x: *mut f64,
    y: *mut f64,
    delta: *mut f64,
    len: size_t,
) -> SlStatus {
    guard(|| {
        let d = &deref(domain, "domain")?.inner;
        expect_len(len, d.len(), "node buffers")?;
        for k in 0..d.len() {
            let p = d.point(k);
            if !x.is_null() {
                *x.add(k) = p[0];
            }
            if !y.is_null() {
                *y.add(k) = p[1];
            }
            if !delta.is_null() {
                *delta.add(k) = d.delta()[k];
            }
        }
        Ok(())
    })
}

/// Samples a coefficient family on `domain`. `param` is ignored for identity.
///
/// # Safety
/// `domain` must be a live handle and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn sl_coefficients_new(
    domain: *const SlDomain,
    kind: SlCoefficientKind,
    param: f64,
    out: *mut *mut SlCoefficients,
) -> SlStatus {
    guard(|| {
        let d = &deref(domain, "domain")?.inner;
        let preset = match kind {
            SlCoefficientKind::Identity => CoefficientPreset::Identity,
            SlCoefficientKind::Scalar => CoefficientPreset::Scalar { c: param },
            SlCoefficientKind::DiagonalSine => CoefficientPreset::DiagonalSine { eps: param },
            SlCoefficientKind::RotationMix => CoefficientPreset::RotationMix { eps: param },
        };
        let inner = build_coefficients(&preset, d)?;
        write_out(out, SlCoefficients { inner }, "out")
    })
}

/// # Safety
/// `coeff` must be null or a handle from `sl_coefficients_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_coefficients_free(coeff: *mut SlCoefficients) {
    if !coeff.is_null() {
        drop(Box::from_raw(coeff));
    }
}

/// Runs the regularized scheme for `-Pu = f/u^γ` with nodal data `f`.
///
/// `schedule` may be null with `schedule_len == 0` for the default
/// `1, 2, 4, ..., 1024`. The limit is written to `u`; `summary` may be null.
///
/// # Safety
/// `f` and `u` must be valid for `len` doubles, `schedule` for
/// `schedule_len` integers.
#[no_mangle]
pub unsafe extern "C" fn sl_solve(
    domain: *const SlDomain,
    coeff: *const SlCoefficients,
    gamma: f64,
    f: *const f64,
    len: size_t,
    schedule: *const u64,
    schedule_len: size_t,
    u: *mut f64,
    summary: *mut SlSolveSummary,
) -> SlStatus {
    guard(|| {
        let d = deref(domain, "domain")?;
        let c = deref(coeff, "coefficients")?;
        check_pair(d, c)?;
        let n = d.inner.len();
        if len != n {
            return Err(invalid(format!("data has {len} values, the domain has {n} nodes")));
        }
        let data = slice(f, len, "f")?;
        let out = slice_mut(u, len, "u")?;
        let mut options = SchemeOptions::default();
        if schedule_len > 0 {
            if schedule.is_null() {
                return Err(null("schedule"));
            }
            options.schedule = std::slice::from_raw_parts(schedule, schedule_len).to_vec();
        }
        let problem = ProblemSpec::from_values(gamma, GridFunction::from_vec(data.to_vec()))?;
        let report = outer_solve(&problem, &d.inner, &c.inner, &options)?;
        out.copy_from_slice(report.limit.values());
        if let Some(s) = summary.as_mut() {
            let last = report.last();
            *s = SlSolveSummary {
                levels: report.levels.len(),
                final_n: last.n,
                min_u: last.min_u,
                max_u: last.max_u,
                final_residual: last.residual,
                monotone: report.monotone,
                positive: report.positive,
            };
        }
        Ok(())
    })
}

/// Smallness condition for exponent `gamma`.
///
/// # Safety
/// Handles must be live and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn sl_smallness(
    domain: *const SlDomain,
    coeff: *const SlCoefficients,
    gamma: f64,
    out: *mut SlSmallness,
) -> SlStatus {
    guard(|| {
        let d = deref(domain, "domain")?;
        let c = deref(coeff, "coefficients")?;
        check_pair(d, c)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = smallness_margin(gamma, &c.inner, &d.inner)?;
        *out = SlSmallness {
            value_linear: r.value_linear,
            value_squared: r.value_squared,
            poincare_constant: r.poincare_constant,
            pass_linear: r.pass_linear,
            pass_squared: r.pass_squared,
        };
        Ok(())
    })
}

/// Discrete Green function of `-P` with pole at node `source`, written to `out`.
///
/// # Safety
/// Handles must be live and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_green_column(
    domain: *const SlDomain,
    coeff: *const SlCoefficients,
    source: size_t,
    out: *mut f64,
    len: size_t,
) -> SlStatus {
    guard(|| {
        let d = deref(domain, "domain")?;
        let c = deref(coeff, "coefficients")?;
        check_pair(d, c)?;
        let n = d.inner.len();
        if source >= n {
            return Err(invalid(format!("source {source} out of range for {n} nodes")));
        }
        expect_len(len, n, "out")?;
        let g = green_column(&d.inner, &c.inner, source)?;
        slice_mut(out, n, "out")?.copy_from_slice(g.values());
        Ok(())
    })
}

/// Runs an experiment config (TOML text) and writes its report into `out_dir`.
///
/// Returns `CertificationFailure` when a requested diagnostic fails; the
/// report is written in that case too.
///
/// # Safety
/// Both strings must be valid NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn sl_run_config(config_toml: *const c_char, out_dir: *const c_char) -> SlStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        if out_dir.is_null() {
            return Err(null("out_dir"));
        }
        let text = CStr::from_ptr(config_toml).to_str().map_err(|e| invalid(format!("config is not UTF-8: {e}")))?;
        let dir = CStr::from_ptr(out_dir).to_str().map_err(|e| invalid(format!("out_dir is not UTF-8: {e}")))?;
        let mut config = ExperimentConfig::from_toml(text)?;
        config.output_dir = dir.into();
        let mut report = RunReport::new("solve", Some(config.clone()));
        let result = run_solve(&config, config.domain.h, &mut report);
        let outcome = match result {
            Ok(artifacts) => {
                report.finish_certifications();
                write_artifacts(Path::new(dir), &artifacts).map_err(Failure::from)
            }
            Err(e) => {
                report.fail(&e);
                Err(Failure::from(e))
            }
        };
        report.write_json(Path::new(dir))?;
        outcome?;
        if report.status == RunStatus::CertificationFailure {
            let failed = report.diagnostics.failures().join(", ");
            return Err(Failure(SlStatus::CertificationFailure, format!("failed certifications: {failed}")));
        }
        Ok(())
    })
}
