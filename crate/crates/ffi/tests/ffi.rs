use std::ffi::{c_char, CStr};
use std::ptr;

use cox_invariance_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { cox_last_error_message(buf.as_mut_ptr(), buf.len()) };
    if n == 0 {
        return String::new();
    }
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn model(z: f64, y: f64, lambda: f64) -> *mut CoxModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { cox_model_new(z, y, lambda, &mut m) }, CoxStatus::Ok);
    m
}

#[test]
fn model_mass_matches_closed_form() {
    let m = model(1.0, 1.0, 1.0);
    let mut mass = 0.0;
    assert_eq!(unsafe { cox_intensity_mass(m, 0.0, 1.0, &mut mass) }, CoxStatus::Ok);
    assert!((mass - 1.4323323583816937).abs() < 1e-12);
    unsafe { cox_model_free(m) };
}

#[test]
fn invalid_model_sets_message() {
    let mut m = ptr::null_mut();
    let s = unsafe { cox_model_new(-1.0, 1.0, 1.0, &mut m) };
    assert_eq!(s, CoxStatus::InvalidParameter);
    assert!(m.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_rejected() {
    assert_eq!(unsafe { cox_model_new(1.0, 1.0, 1.0, ptr::null_mut()) }, CoxStatus::NullPointer);
    let mut mass = 0.0;
    let s = unsafe { cox_intensity_mass(ptr::null(), 0.0, 1.0, &mut mass) };
    assert_eq!(s, CoxStatus::NullPointer);
    assert!(last_error().contains("model"));
    unsafe {
        cox_model_free(ptr::null_mut());
        cox_plan_free(ptr::null_mut());
        cox_configuration_free(ptr::null_mut());
    }
}

#[test]
fn error_cleared_after_success() {
    let mut m = ptr::null_mut();
    unsafe { cox_model_new(1.0, f64::NAN, 1.0, &mut m) };
    assert!(!last_error().is_empty());
    let m = model(1.0, 1.0, 1.0);
    assert_eq!(unsafe { cox_last_error_message(ptr::null_mut(), 0) }, 0);
    unsafe { cox_model_free(m) };
}

#[test]
fn error_message_truncates() {
    unsafe { cox_intensity_mass(ptr::null(), 0.0, 1.0, ptr::null_mut()) };
    let mut buf = [1 as c_char; 4];
    let need = unsafe { cox_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(need > 4);
    assert_eq!(buf[3], 0);
}

#[test]
fn laplace_step_value() {
    let mut v = 0.0;
    let s = unsafe { cox_laplace_step(0.0, 1.0, 1.0, 1.0, 1.0, 1.0, &mut v) };
    assert_eq!(s, CoxStatus::Ok);
    let mass: f64 = 1.4323323583816937;
    let expected = (-(1.0 - (-1.0f64).exp()) * mass).exp();
    assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
}

#[test]
fn gaussian_tail_and_version() {
    assert!((cox_gaussian_tail(0.0) - 0.5).abs() < 1e-15);
    assert!((cox_gaussian_tail(5.0) / 2.866515718791939e-7 - 1.0).abs() < 1e-10);
    let v = unsafe { CStr::from_ptr(cox_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn observe_round_trip() {
    let m = model(1.0, 1.0, 1.0);
    let mut plan = ptr::null_mut();
    let s = unsafe { cox_plan_new(m, -1.0, 1.0, 0.5, 1.0, 1e-6, 7, &mut plan) };
    assert_eq!(s, CoxStatus::Ok, "{}", last_error());
    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(unsafe { cox_plan_padded_window(plan, &mut lo, &mut hi) }, CoxStatus::Ok);
    assert!(lo < -1.0 && hi > 1.0);

    let sample = |stream| {
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(unsafe { cox_observe(m, plan, stream, &mut a, &mut b) }, CoxStatus::Ok);
        let mut out = Vec::new();
        for c in [a, b] {
            let mut n = 0usize;
            assert_eq!(unsafe { cox_configuration_len(c, &mut n) }, CoxStatus::Ok);
            let mut atoms = vec![0.0; n];
            assert_eq!(unsafe { cox_configuration_atoms(c, atoms.as_mut_ptr(), n) }, CoxStatus::Ok);
            assert!(atoms.windows(2).all(|w| w[0] <= w[1]));
            assert!(atoms.iter().all(|x| (-1.0..=1.0).contains(x)));
            unsafe { cox_configuration_free(c) };
            out.push(atoms);
        }
        out
    };
    assert_eq!(sample(3), sample(3));
    let total: usize = (0..20).map(|s| sample(s)[1].len()).sum();
    assert!(total > 0);

    unsafe {
        cox_plan_free(plan);
        cox_model_free(m);
    }
}

#[test]
fn atoms_buffer_too_small() {
    let m = model(50.0, 50.0, 1.0);
    let mut plan = ptr::null_mut();
    assert_eq!(unsafe { cox_plan_new(m, 0.0, 1.0, 0.1, 1.0, 1e-6, 1, &mut plan) }, CoxStatus::Ok);
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { cox_observe(m, plan, 0, &mut a, &mut b) }, CoxStatus::Ok);
    let mut n = 0usize;
    unsafe { cox_configuration_len(a, &mut n) };
    assert!(n > 1);
    let mut buf = vec![0.0; n - 1];
    let s = unsafe { cox_configuration_atoms(a, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(s, CoxStatus::BufferTooSmall);
    unsafe {
        cox_configuration_free(a);
        cox_configuration_free(b);
        cox_plan_free(plan);
        cox_model_free(m);
    }
}

#[test]
fn plan_rejects_negative_time() {
    let m = model(1.0, 1.0, 1.0);
    let mut plan = ptr::null_mut();
    let s = unsafe { cox_plan_new(m, 0.0, 1.0, -1.0, 1.0, 1e-6, 1, &mut plan) };
    assert_eq!(s, CoxStatus::InvalidParameter);
    assert!(plan.is_null());
    unsafe { cox_model_free(m) };
}

#[test]
fn header_lists_exports() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cox_invariance.h")).unwrap();
    for name in [
        "cox_model_new",
        "cox_model_free",
        "cox_intensity_mass",
        "cox_laplace_step",
        "cox_plan_new",
        "cox_plan_padded_window",
        "cox_plan_free",
        "cox_observe",
        "cox_configuration_len",
        "cox_configuration_atoms",
        "cox_configuration_free",
        "cox_last_error_message",
        "cox_gaussian_tail",
        "cox_version",
        "COX_STATUS_PADDING",
        "typedef struct CoxPlan CoxPlan",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
