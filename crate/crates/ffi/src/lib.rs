//! C interface to `parisi_core`.
//!
//! Every entry point returns a [`ParisiStatus`]; results come back through
//! out-pointers. On failure the message is kept per thread and can be fetched
//! with [`parisi_last_error`]. Strings handed out by the library must be
//! released with [`parisi_string_free`], handles with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use parisi_core::cascade::{psi_grid, PsiGridConfig, SpinLaw};
use parisi_core::cli::{execute, render_report};
use parisi_core::config::{Command, RunConfig};
use parisi_core::cone::{conjugate_xi, XiModel, XiModelSpec};
use parisi_core::path::{discretize, merged_grid, uparrow_certificate, MatrixPath, PathSpec, RampStepPath};
use parisi_core::{Error, SymMatrix};

/// Status codes shared by all entry points.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParisiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Config = 4,
    Io = 5,
    Panic = 6,
}

/// Opaque covariance model `ξ`.
pub struct ParisiModel(XiModel);

/// Opaque nondecreasing path `q`.
pub struct ParisiPath(RampStepPath);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ParisiStatus {
    match e {
        Error::Config(_) | Error::Json(_) => ParisiStatus::Config,
        Error::Io(_) => ParisiStatus::Io,
        Error::DimensionMismatch { .. }
        | Error::NonFinite(_)
        | Error::NotPsd { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::InvalidModel(_)
        | Error::InvalidPath(_)
        | Error::NonMonotone { .. }
        | Error::OutOfRange(_)
        | Error::InvalidMeasure(_)
        | Error::InvalidCascade(_) => ParisiStatus::InvalidArgument,
        _ => ParisiStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (ParisiStatus, String)>) -> ParisiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ParisiStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside parisi".into());
            ParisiStatus::Panic
        }
    }
}

fn lift<T>(r: parisi_core::Result<T>) -> Result<T, (ParisiStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (ParisiStatus, String) {
    (ParisiStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ParisiStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ParisiStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn read_matrix(p: *const f64, dim: usize) -> Result<SymMatrix, (ParisiStatus, String)> {
    if p.is_null() {
        return Err(null("matrix"));
    }
    if dim == 0 {
        return Err((ParisiStatus::InvalidArgument, "dimension must be positive".into()));
    }
    let data = std::slice::from_raw_parts(p, dim * dim);
    let rows: Vec<Vec<f64>> = data.chunks(dim).map(|r| r.to_vec()).collect();
    lift(SymMatrix::from_rows(&rows))
}

fn hand_out(s: String, out: *mut *mut c_char) -> Result<(), (ParisiStatus, String)> {
    let c = CString::new(s).map_err(|_| (ParisiStatus::Numerical, "output contains a nul byte".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn parisi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn parisi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn parisi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a model from its JSON spec (`{"kind": ..., "dim": ..., "coefficients": ...}`).
///
/// # Safety
/// `spec_json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn parisi_model_from_json(spec_json: *const c_char, out: *mut *mut ParisiModel) -> ParisiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(spec_json, "spec_json")?;
        let spec: XiModelSpec = lift(serde_json::from_str(text).map_err(Error::from))?;
        let model = lift(XiModel::from_spec(&spec))?;
        *out = Box::into_raw(Box::new(ParisiModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`parisi_model_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn parisi_model_free(model: *mut ParisiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension `D` of the model.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn parisi_model_dim(model: *const ParisiModel, out: *mut usize) -> ParisiStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.0.dim();
        Ok(())
    })
}

/// `ξ(a)` for a row-major `dim × dim` matrix.
///
/// # Safety
/// `a` must point to `dim²` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn parisi_model_eval(model: *const ParisiModel, a: *const f64, dim: usize, out: *mut f64) -> ParisiStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lift(m.0.eval(&read_matrix(a, dim)?))?;
        Ok(())
    })
}

/// `ξ*(y)`; the maximizer is written row-major to `argmax` when it is non-null.
///
/// # Safety
/// `y` (and `argmax` if non-null) must hold `dim²` doubles.
#[no_mangle]
pub unsafe extern "C" fn parisi_conjugate(
    model: *const ParisiModel,
    y: *const f64,
    dim: usize,
    tol: f64,
    value: *mut f64,
    argmax: *mut f64,
) -> ParisiStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let value = value.as_mut().ok_or_else(|| null("value"))?;
        let r = lift(conjugate_xi(&m.0, &read_matrix(y, dim)?, tol))?;
        *value = r.value;
        if !argmax.is_null() {
            let dst = std::slice::from_raw_parts_mut(argmax, dim * dim);
            for (k, v) in dst.iter_mut().enumerate() {
                *v = r.argmax.as_sym().get(k / dim, k % dim);
            }
        }
        Ok(())
    })
}

/// Builds a path from its JSON spec (`{"type": "step" | "ramp_step", ...}`).
///
/// # Safety
/// `spec_json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn parisi_path_from_json(spec_json: *const c_char, out: *mut *mut ParisiPath) -> ParisiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(spec_json, "spec_json")?;
        let spec: PathSpec = lift(serde_json::from_str(text).map_err(Error::from))?;
        let path = lift(spec.build())?;
        *out = Box::into_raw(Box::new(ParisiPath(path)));
        Ok(())
    })
}

/// # Safety
/// `path` must come from [`parisi_path_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn parisi_path_free(path: *mut ParisiPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Ellipticity constant of the path; `0` when no certificate was found.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn parisi_path_certificate(path: *const ParisiPath, out: *mut f64) -> ParisiStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = uparrow_certificate(&p.0).constant().unwrap_or(0.0);
        Ok(())
    })
}

/// `ψ(q)` by Gauss–Hermite recursion with the default grid and the default
/// spin law for the dimension; ramps are averaged over `cells` cells.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn parisi_psi(path: *const ParisiPath, cells: usize, out: *mut f64) -> ParisiStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let law = lift(SpinLaw::default_for(p.0.dim()))?;
        let step = if p.0.slope() == 0.0 {
            p.0.step().clone()
        } else {
            lift(discretize(&p.0, &merged_grid(cells.max(1), &p.0.knots())))?
        };
        *out = lift(psi_grid(&step, &law, &PsiGridConfig::default()))?;
        Ok(())
    })
}

/// Runs a CLI command on a JSON config and returns the report JSON.
/// Status is `Ok` even when the report records a failed assertion.
///
/// # Safety
/// Strings must be nul-terminated; the report must be freed with [`parisi_string_free`].
#[no_mangle]
pub unsafe extern "C" fn parisi_run_json(
    command: *const c_char,
    config_json: *const c_char,
    report: *mut *mut c_char,
) -> ParisiStatus {
    guard(|| {
        if report.is_null() {
            return Err(null("report"));
        }
        let name = read_str(command, "command")?;
        let cmd = Command::from_name(name)
            .ok_or_else(|| (ParisiStatus::Config, format!("unknown command `{name}`")))?;
        if cmd == Command::Suite {
            return Err((ParisiStatus::Config, "the suite is not available through this entry point".into()));
        }
        let mut cfg = lift(RunConfig::from_json(read_str(config_json, "config_json")?))?;
        lift(cfg.prepare(cmd))?;
        let outcome = lift(execute(cmd, &cfg))?;
        hand_out(render_report(cmd, &cfg, &outcome), report)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Config("x".into())), ParisiStatus::Config);
        assert_eq!(status_of(&Error::InvalidPath("x".into())), ParisiStatus::InvalidArgument);
        assert_eq!(status_of(&Error::Uncertified), ParisiStatus::Numerical);
    }
}
