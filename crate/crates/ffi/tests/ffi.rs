use std::ffi::{CStr, CString};
use std::ptr;

use difflab_ffi::*;

fn schedule(name: &str, params: &[f64], horizon: f64) -> *mut DlSchedule {
    let name = CString::new(name).unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { dl_schedule_new(name.as_ptr(), params.as_ptr(), params.len(), horizon, &mut s) };
    assert_eq!(st, DlStatus::DlOk);
    assert!(!s.is_null());
    s
}

fn last_error() -> String {
    let p = dl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn kernel_matches_core() {
    let s = schedule("vp_linear", &[0.1, 20.0], 1.0);
    let (mut a1, mut a2) = (0.0, 0.0);
    assert_eq!(unsafe { dl_schedule_kernel(s, 0.5, &mut a1, &mut a2) }, DlStatus::DlOk);
    let spec = difflab::ScheduleSpec::new(difflab::Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0).unwrap();
    let k = spec.kernel_params(0.5).unwrap();
    assert_eq!((a1, a2), (k.a1, k.a2));
    assert!(dl_last_error_message().is_null());
    unsafe { dl_schedule_free(s) };
}

#[test]
fn errors_set_status_and_message() {
    let name = CString::new("vp_linear").unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { dl_schedule_new(name.as_ptr(), [0.1].as_ptr(), 1, 1.0, &mut s) };
    assert_eq!(st, DlStatus::DlDomain);
    assert!(s.is_null());
    assert!(last_error().contains("2 parameters"));

    let bogus = CString::new("nope").unwrap();
    assert_eq!(unsafe { dl_schedule_new(bogus.as_ptr(), ptr::null(), 0, 1.0, &mut s) }, DlStatus::DlUnsupported);

    let s = schedule("ve_const", &[1.0], 1.0);
    assert_eq!(unsafe { dl_schedule_kernel(s, 2.0, ptr::null_mut(), ptr::null_mut()) }, DlStatus::DlDomain);
    let mut a1 = 0.0;
    assert_eq!(unsafe { dl_schedule_kernel(s, 0.5, &mut a1, ptr::null_mut()) }, DlStatus::DlNullPointer);
    assert!(last_error().contains("a2"));
    assert_eq!(unsafe { dl_schedule_kernel(ptr::null(), 0.5, &mut a1, &mut a1) }, DlStatus::DlNullPointer);
    unsafe { dl_schedule_free(s) };
    unsafe { dl_schedule_free(ptr::null_mut()) };
}

#[test]
fn admissibility_and_bound() {
    let s = schedule("vp_linear", &[0.1, 20.0], 1.0);
    let (mut ok, mut eta_max) = (0, 0.0);
    assert_eq!(unsafe { dl_stepsize_admissible(s, 0.64, 8, 1000, &mut ok, &mut eta_max) }, DlStatus::DlOk);
    assert_eq!(ok, 1);
    assert!(eta_max > 1e-3);
    let mut bound = 0.0;
    assert_eq!(unsafe { dl_theorem_bound(s, 0.64, 8, 1000, 0.0, 0.0, &mut bound) }, DlStatus::DlOk);
    let mut var = 0.0;
    assert_eq!(unsafe { dl_gaussian_terminal_variance(s, 0.64, 8, 1000, &mut var) }, DlStatus::DlOk);
    assert!(bound >= 8f64.sqrt() * (var.sqrt() - 0.8).abs());

    assert_eq!(unsafe { dl_theorem_bound(s, 2.5, 8, 1000, 0.0, 0.0, &mut bound) }, DlStatus::DlAdmissibility);
    assert!(last_error().contains("condition 1"));
    unsafe { dl_schedule_free(s) };
}

#[test]
fn prescription_fixture() {
    let s = schedule("ve_exp", &[1.0, 0.5], 1.0);
    let (mut t, mut eta, mut m) = (0.0, 0.0, 0.0);
    let mut k = 0u64;
    assert_eq!(unsafe { dl_prescribe(s, 0.1, 16, &mut t, &mut eta, &mut m, &mut k) }, DlStatus::DlOk);
    assert_eq!(k, 5903);
    assert!((t - 40f64.ln()).abs() < 1e-14);
    unsafe { dl_schedule_free(s) };
}

#[test]
fn sampler_round_trip() {
    let s = schedule("vp_linear", &[0.1, 20.0], 1.0);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { dl_sample(s, 0.64, 4, 200, 4000, 7, 0.0, &mut run) }, DlStatus::DlOk);
    let (mut m2, mut se) = (0.0, 0.0);
    assert_eq!(unsafe { dl_run_second_moment(run, &mut m2, &mut se) }, DlStatus::DlOk);
    let mut var = 0.0;
    assert_eq!(unsafe { dl_gaussian_terminal_variance(s, 0.64, 4, 200, &mut var) }, DlStatus::DlOk);
    assert!((m2 - var).abs() < 4.0 * se, "{m2} vs {var} (se {se})");
    let mut w2 = 0.0;
    assert_eq!(unsafe { dl_run_w2_moment_matched(run, 0.64, &mut w2) }, DlStatus::DlOk);
    assert!(w2.is_finite() && w2 >= 0.0);
    unsafe { dl_run_free(run) };

    let mut c0 = 0.0;
    assert_eq!(unsafe { dl_gaussian_c0(s, 0.64, 4, &mut c0) }, DlStatus::DlOk);
    assert!(c0.is_finite());
    assert_eq!(unsafe { dl_sample(s, 0.64, 4, 0, 10, 7, 0.0, &mut run) }, DlStatus::DlDomain);
    assert!(run.is_null());
    unsafe { dl_schedule_free(s) };
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(dl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/difflab.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["dl_schedule_new", "dl_theorem_bound", "dl_last_error_message", "DL_ADMISSIBILITY = 5", "typedef struct DlSchedule DlSchedule"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler on PATH; syntax check skipped");
        return;
    };
    assert!(status.success());
}
