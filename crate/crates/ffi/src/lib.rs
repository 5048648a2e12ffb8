//! C ABI over `resect-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`ResectStatus`]; on failure the message is available from
//! [`resect_last_error`] on the same thread until the next failing call.
//! Strings returned by the library are released with [`resect_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use resect_core::geometry::Point3;
use resect_core::metrics::{score_trial, ScoringOptions};
use resect_core::planning::demo::demo_plan;
use resect_core::planning::manifest::load_plan;
use resect_core::planning::ResectionPlan;
use resect_core::registration::{horn_absolute_orientation, FiducialSet};
use resect_core::sim::{Condition, CutTrace};
use resect_core::stats::{paired_t_test, PairedSample};
use resect_core::study::{run_study, StudyConfig, StudyReport};
use resect_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResectStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Degenerate = 5,
    Geometry = 6,
    Panic = 7,
}

impl From<&Error> for ResectStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => ResectStatus::Io,
            Error::Parse { .. } => ResectStatus::Parse,
            Error::DegenerateConfiguration(_) | Error::DegenerateFaces { .. } => ResectStatus::Degenerate,
            Error::InvalidMesh(_)
            | Error::EmptyMesh
            | Error::InvalidPolyline(_)
            | Error::EmptyIntersection
            | Error::OpenChain { .. }
            | Error::PlanInvalid(_) => ResectStatus::Geometry,
            _ => ResectStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: ResectStatus, msg: impl Into<String>) -> ResectStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), ResectStatus>) -> ResectStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ResectStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ResectStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn check<T>(r: resect_core::Result<T>) -> Result<T, ResectStatus> {
    r.map_err(|e| fail(ResectStatus::from(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), ResectStatus> {
    if p.is_null() {
        Err(fail(ResectStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ResectStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ResectStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Last error message on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn resect_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn resect_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn resect_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

pub struct ResectPlan(ResectionPlan);

pub struct ResectTrace(CutTrace);

pub struct ResectStudy(StudyReport);

/// Builds the bundled demo plan.
#[no_mangle]
pub unsafe extern "C" fn resect_plan_demo(out: *mut *mut ResectPlan) -> ResectStatus {
    guard(|| {
        non_null(out, "out")?;
        let plan = check(demo_plan())?;
        *out = Box::into_raw(Box::new(ResectPlan(plan)));
        Ok(())
    })
}

/// Loads a plan manifest, verifying its checksum.
#[no_mangle]
pub unsafe extern "C" fn resect_plan_load(manifest_path: *const c_char, out: *mut *mut ResectPlan) -> ResectStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(manifest_path, "manifest_path")?;
        let plan = check(load_plan(path))?;
        *out = Box::into_raw(Box::new(ResectPlan(plan)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn resect_plan_free(plan: *mut ResectPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Number of points on the planned path.
#[no_mangle]
pub unsafe extern "C" fn resect_plan_path_len(plan: *const ResectPlan, out_len: *mut usize) -> ResectStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(out_len, "out_len")?;
        *out_len = (*plan).0.path().len();
        Ok(())
    })
}

/// Copies path points as `x y z` triples into `xyz`, which holds `capacity` points.
#[no_mangle]
pub unsafe extern "C" fn resect_plan_path_points(
    plan: *const ResectPlan,
    xyz: *mut f64,
    capacity: usize,
) -> ResectStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(xyz, "xyz")?;
        let pts = (*plan).0.path().points();
        if capacity < pts.len() {
            return Err(fail(
                ResectStatus::InvalidArgument,
                format!("capacity {capacity} < {} points", pts.len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(xyz, 3 * pts.len());
        for (chunk, p) in dst.chunks_exact_mut(3).zip(pts) {
            chunk.copy_from_slice(&[p.x, p.y, p.z]);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn resect_plan_perimeter(plan: *const ResectPlan, out_mm: *mut f64) -> ResectStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(out_mm, "out_mm")?;
        *out_mm = (*plan).0.perimeter();
        Ok(())
    })
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResectRegistration {
    pub quaternion_wxyz: [f64; 4],
    pub translation: [f64; 3],
    pub fre_rms: f64,
    pub fre_mean: f64,
}

unsafe fn points(p: *const f64, n: usize) -> Vec<Point3> {
    std::slice::from_raw_parts(p, 3 * n)
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect()
}

/// Rigid model-to-measured fit of `n` point pairs given as `x y z` triples.
#[no_mangle]
pub unsafe extern "C" fn resect_register(
    model_xyz: *const f64,
    measured_xyz: *const f64,
    n: usize,
    out: *mut ResectRegistration,
) -> ResectStatus {
    guard(|| {
        non_null(model_xyz, "model_xyz")?;
        non_null(measured_xyz, "measured_xyz")?;
        non_null(out, "out")?;
        let labels = (0..n).map(|i| format!("f{i}")).collect();
        let f = check(FiducialSet::new(labels, points(model_xyz, n), points(measured_xyz, n)))?;
        let r = check(horn_absolute_orientation(&f))?;
        let t = r.transform.translation();
        *out = ResectRegistration {
            quaternion_wxyz: r.transform.quaternion_wxyz(),
            translation: [t.x, t.y, t.z],
            fre_rms: r.fre_rms,
            fre_mean: r.fre_mean,
        };
        Ok(())
    })
}

/// Parses a trace in the `#trace v1` text format.
#[no_mangle]
pub unsafe extern "C" fn resect_trace_parse(text: *const c_char, out: *mut *mut ResectTrace) -> ResectStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = str_arg(text, "text")?;
        let trace = check(CutTrace::parse(text))?;
        *out = Box::into_raw(Box::new(ResectTrace(trace)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn resect_trace_free(trace: *mut ResectTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResectTrialMetrics {
    pub deviation_mean_mm: f64,
    pub deviation_max_mm: f64,
    pub margin_min_mm: f64,
    pub time_s: f64,
    pub breach: bool,
    /// False for unguided.
    pub guided: bool,
}

/// Scores a trace against a plan with the default scoring options.
#[no_mangle]
pub unsafe extern "C" fn resect_score_trial(
    plan: *const ResectPlan,
    trace: *const ResectTrace,
    out: *mut ResectTrialMetrics,
) -> ResectStatus {
    guard(|| {
        non_null(plan, "plan")?;
        non_null(trace, "trace")?;
        non_null(out, "out")?;
        let m = check(score_trial("", &(*trace).0, &(*plan).0, &ScoringOptions::default()))?;
        *out = ResectTrialMetrics {
            deviation_mean_mm: m.deviation_mean,
            deviation_max_mm: m.deviation_max,
            margin_min_mm: m.margin_min,
            time_s: m.completion_time,
            breach: m.breach,
            guided: m.condition == Condition::Guided,
        };
        Ok(())
    })
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResectTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub mean_difference: f64,
    pub sd_difference: f64,
    pub degenerate: bool,
}

/// Paired t-test of `a - b` over `n` pairs.
#[no_mangle]
pub unsafe extern "C" fn resect_paired_t_test(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut ResectTestResult,
) -> ResectStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        let a = std::slice::from_raw_parts(a, n).to_vec();
        let b = std::slice::from_raw_parts(b, n).to_vec();
        let r = check(PairedSample::new(a, b, ("a", "b")).and_then(|s| paired_t_test(&s)))?;
        *out = ResectTestResult {
            t_statistic: r.t_statistic,
            degrees_of_freedom: r.degrees_of_freedom,
            p_value: r.p_value,
            mean_difference: r.mean_difference,
            sd_difference: r.sd_difference,
            degenerate: r.degenerate,
        };
        Ok(())
    })
}

/// Runs a study. `config_toml` may be null for the defaults; `seed` overrides
/// the config's seed.
#[no_mangle]
pub unsafe extern "C" fn resect_study_run(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut ResectStudy,
) -> ResectStatus {
    guard(|| {
        non_null(out, "out")?;
        let mut cfg = if config_toml.is_null() {
            StudyConfig::default()
        } else {
            check(StudyConfig::parse(str_arg(config_toml, "config_toml")?))?
        };
        cfg.study.seed = seed;
        let report = check(run_study(&cfg))?;
        *out = Box::into_raw(Box::new(ResectStudy(report)));
        Ok(())
    })
}

/// Report text; free with `resect_string_free`.
#[no_mangle]
pub unsafe extern "C" fn resect_study_report(study: *const ResectStudy, out: *mut *mut c_char) -> ResectStatus {
    guard(|| {
        non_null(study, "study")?;
        non_null(out, "out")?;
        *out = into_c_string((*study).0.report_text());
        Ok(())
    })
}

/// Metrics CSV; free with `resect_string_free`.
#[no_mangle]
pub unsafe extern "C" fn resect_study_metrics_csv(study: *const ResectStudy, out: *mut *mut c_char) -> ResectStatus {
    guard(|| {
        non_null(study, "study")?;
        non_null(out, "out")?;
        *out = into_c_string((*study).0.metrics_csv());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn resect_study_free(study: *mut ResectStudy) {
    if !study.is_null() {
        drop(Box::from_raw(study));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let p = resect_last_error();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(ResectStatus::Ok as i32, 0);
        assert_eq!(ResectStatus::Panic as i32, 7);
        assert_eq!(ResectStatus::from(&Error::EmptyIntersection), ResectStatus::Geometry);
        assert_eq!(
            ResectStatus::from(&Error::DegenerateConfiguration("x".into())),
            ResectStatus::Degenerate
        );
    }

    #[test]
    fn null_arguments_are_reported() {
        let s = unsafe { resect_plan_demo(ptr::null_mut()) };
        assert_eq!(s, ResectStatus::NullPointer);
        assert!(last_error().contains("out"));
        let mut r = ResectRegistration::default();
        let s = unsafe { resect_register(ptr::null(), ptr::null(), 3, &mut r) };
        assert_eq!(s, ResectStatus::NullPointer);
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), ResectStatus::Panic);
        assert!(last_error().contains("boom"));
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(resect_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
