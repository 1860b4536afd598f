//! C ABI for `cox-invariance`.
//!
//! Objects are opaque handles created by `*_new` functions and released by the
//! matching `*_free`. Every fallible call returns a [`CoxStatus`]; on failure
//! the message is available from [`cox_last_error_message`] on the same
//! thread. Results are written through out-pointers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cox_invariance::analytic::{cox_laplace_closed_form, gaussian_tail, QuadratureSpec, TestFunction};
use cox_invariance::dynamics::{observed_evolution, SimulationPlan};
use cox_invariance::pointproc::{intensity_mass, IntensityModel, PointConfiguration, WindowSpec};
use cox_invariance::randomness::SeedSpec;
use cox_invariance::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Padding = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Intensity `(Z e^{-2 lambda x} + Y) dx`.
pub struct CoxModel(IntensityModel);

/// Observation window, time, drift and certified padding.
pub struct CoxPlan(SimulationPlan);

/// Sorted atoms on a window.
pub struct CoxConfiguration(PointConfiguration);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = e.borrow_mut();
        v.clear();
        v.extend(msg.bytes().filter(|&b| b != 0));
        v.push(0);
    });
}

fn status_of(e: &Error) -> CoxStatus {
    match e {
        Error::Padding { .. } => CoxStatus::Padding,
        Error::Quadrature { .. } | Error::Truncation { .. } | Error::DenseCertificate { .. } => CoxStatus::Numerical,
        _ => CoxStatus::InvalidParameter,
    }
}

fn guard(f: impl FnOnce() -> Result<(), CoxStatus>) -> CoxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            CoxStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            CoxStatus::Panic
        }
    }
}

fn fail(e: Error) -> CoxStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(name: &str) -> CoxStatus {
    set_error(&format!("{name} is null"));
    CoxStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, CoxStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(p: *mut T, v: T, name: &str) -> Result<(), CoxStatus> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(v);
    Ok(())
}

/// Copies the last error message of this thread, NUL-terminated, into `buf`.
/// Returns the buffer size needed (including the NUL); 0 if there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cox_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let v = e.borrow();
        if v.is_empty() {
            return 0;
        }
        if !buf.is_null() && len > 0 {
            let n = v.len().min(len);
            ptr::copy_nonoverlapping(v.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        v.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cox_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// `P(G > z)` for a standard normal `G`.
#[no_mangle]
pub extern "C" fn cox_gaussian_tail(z: f64) -> f64 {
    gaussian_tail(z)
}

/// # Safety
/// `out` must be a valid pointer; on success it receives a handle owned by
/// the caller.
#[no_mangle]
pub unsafe extern "C" fn cox_model_new(z: f64, y: f64, lambda: f64, out: *mut *mut CoxModel) -> CoxStatus {
    guard(|| {
        let m = IntensityModel::new(z, y, lambda).map_err(fail)?;
        write(out, Box::into_raw(Box::new(CoxModel(m))), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from [`cox_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cox_model_free(model: *mut CoxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Expected number of atoms of `model` in `[lo, hi]`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cox_intensity_mass(model: *const CoxModel, lo: f64, hi: f64, out: *mut f64) -> CoxStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let w = WindowSpec::new(lo, hi).map_err(fail)?;
        write(out, intensity_mass(&m.0, &w), "out")
    })
}

/// `E exp(-<f, theta>)` for `f = height * 1_[lo, hi]` and
/// `theta ~ PPP((z e^{-2 lambda x} + y) dx)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cox_laplace_step(
    lo: f64,
    hi: f64,
    height: f64,
    z: f64,
    y: f64,
    lambda: f64,
    out: *mut f64,
) -> CoxStatus {
    guard(|| {
        let f = TestFunction::step(lo, hi, height).map_err(fail)?;
        let v = cox_laplace_closed_form(&f, z, y, lambda, &QuadratureSpec::default()).map_err(fail)?;
        write(out, v, "out")
    })
}

/// Plans an evolution on `[lo, hi]` to time `t` under drift `-lambda`, with
/// padding certified for `model` at leak `epsilon`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cox_plan_new(
    model: *const CoxModel,
    lo: f64,
    hi: f64,
    t: f64,
    lambda: f64,
    epsilon: f64,
    seed: u64,
    out: *mut *mut CoxPlan,
) -> CoxStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let w = WindowSpec::new(lo, hi).map_err(fail)?;
        let plan = SimulationPlan::new(w, t, lambda, epsilon, seed)
            .and_then(|p| p.with_padding(&m.0))
            .map_err(fail)?;
        write(out, Box::into_raw(Box::new(CoxPlan(plan))), "out")
    })
}

/// # Safety
/// `plan` must be a live handle; `lo` and `hi` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cox_plan_padded_window(plan: *const CoxPlan, lo: *mut f64, hi: *mut f64) -> CoxStatus {
    guard(|| {
        let p = deref(plan, "plan")?;
        let w = p.0.padded_window.unwrap_or(p.0.observation_window);
        write(lo, w.lo, "lo")?;
        write(hi, w.hi, "hi")
    })
}

/// # Safety
/// `plan` must be null or a handle from [`cox_plan_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cox_plan_free(plan: *mut CoxPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Samples replicate `stream_id` of the plan: the initial and evolved
/// configurations on the observation window.
///
/// # Safety
/// `model` and `plan` must be live handles; `initial` and `evolved` valid
/// pointers. Both returned handles are owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn cox_observe(
    model: *const CoxModel,
    plan: *const CoxPlan,
    stream_id: u64,
    initial: *mut *mut CoxConfiguration,
    evolved: *mut *mut CoxConfiguration,
) -> CoxStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let p = deref(plan, "plan")?;
        if initial.is_null() {
            return Err(null("initial"));
        }
        if evolved.is_null() {
            return Err(null("evolved"));
        }
        let o = observed_evolution(&m.0, &p.0, SeedSpec::new(p.0.seed, stream_id)).map_err(fail)?;
        initial.write(Box::into_raw(Box::new(CoxConfiguration(o.initial))));
        evolved.write(Box::into_raw(Box::new(CoxConfiguration(o.evolved))));
        Ok(())
    })
}

/// Number of atoms.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cox_configuration_len(config: *const CoxConfiguration, out: *mut usize) -> CoxStatus {
    guard(|| {
        let c = deref(config, "config")?;
        write(out, c.0.len(), "out")
    })
}

/// Copies the sorted atoms into `buf`, which must hold at least
/// `cox_configuration_len` values.
///
/// # Safety
/// `config` must be a live handle and `buf` point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cox_configuration_atoms(
    config: *const CoxConfiguration,
    buf: *mut f64,
    cap: usize,
) -> CoxStatus {
    guard(|| {
        let c = deref(config, "config")?;
        let atoms = c.0.atoms();
        if atoms.is_empty() {
            return Ok(());
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < atoms.len() {
            set_error(&format!("buffer holds {cap} values, {} needed", atoms.len()));
            return Err(CoxStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(atoms.as_ptr(), buf, atoms.len());
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from [`cox_observe`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cox_configuration_free(config: *mut CoxConfiguration) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::ZeroDrift), CoxStatus::InvalidParameter);
        let p = Error::Padding { leak: 1.0, epsilon: 0.5, radius: 1.0 };
        assert_eq!(status_of(&p), CoxStatus::Padding);
    }

    #[test]
    fn version_is_package_version() {
        let v = unsafe { CStr::from_ptr(cox_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
