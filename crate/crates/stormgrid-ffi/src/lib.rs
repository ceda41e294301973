//! C ABI surface for the simulator: opaque handles, integer status codes,
//! and JSON serialization for structured results.
//!
//! Ownership rules: every `*_open`/`*_new` output must be released with the
//! matching `*_close`/`*_free`; strings returned as `char*` are released
//! with `sg_string_free`. Handles are not thread-safe; use one per thread
//! or add external locking. `sg_last_error` is thread-local.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stormgrid::ensemble::{run_ensemble, EnsembleInputs};
use stormgrid::runtime::{load_run, LoadedRun};
use stormgrid::sim::{build_hazard_table, run_realization_with_table, HazardTable, RealizationResult};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Config or dataset loading failed; see sg_last_error().
    LoadFailed = 3,
    /// An argument was out of range for the handle it was applied to.
    OutOfRange = 4,
    /// Simulation failed; see sg_last_error().
    SimulationFailed = 5,
    /// Result serialization failed; see sg_last_error().
    SerializeFailed = 6,
}

/// Opaque handle: a loaded run context (config, grid, storm track,
/// fragility curves, precomputed hazard table).
pub struct SgRun {
    run: LoadedRun,
    table: HazardTable,
}

/// Opaque handle: one completed realization.
pub struct SgRealization {
    result: RealizationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

/// Message for the most recent failure on this thread. Valid until the
/// next failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, SgStatus> {
    if p.is_null() {
        return Err(SgStatus::NullArgument);
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("argument is not valid UTF-8");
            Err(SgStatus::InvalidUtf8)
        }
    }
}

/// Load a run context from a config file path.
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_run_open(
    config_path: *const c_char,
    out: *mut *mut SgRun,
) -> SgStatus {
    if out.is_null() {
        return SgStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let path = match path_arg(config_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let loaded = match load_run(path) {
        Ok(r) => r,
        Err(e) => {
            set_error(&e);
            return SgStatus::LoadFailed;
        }
    };
    let table = match build_hazard_table(
        &loaded.grid,
        &loaded.track,
        &loaded.roughness,
        &loaded.params,
    ) {
        Ok(t) => t,
        Err(e) => {
            set_error(&e.to_string());
            return SgStatus::LoadFailed;
        }
    };
    *out = Box::into_raw(Box::new(SgRun { run: loaded, table }));
    SgStatus::Ok
}

/// Release a run context. Null is a no-op.
///
/// # Safety
/// `run` must come from `sg_run_open` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_run_close(run: *mut SgRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of simulation steps in the run's horizon; 0 for a null handle.
///
/// # Safety
/// `run` must be a live handle from `sg_run_open` or null.
#[no_mangle]
pub unsafe extern "C" fn sg_run_steps(run: *const SgRun) -> usize {
    run.as_ref().map_or(0, |r| r.run.params.steps)
}

/// The run's master seed from the config.
///
/// # Safety
/// `run` must be a live handle from `sg_run_open` or null.
#[no_mangle]
pub unsafe extern "C" fn sg_run_master_seed(run: *const SgRun) -> u64 {
    run.as_ref().map_or(0, |r| r.run.config.ensemble.master_seed)
}

/// Run one seeded realization.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_run_simulate(
    run: *const SgRun,
    seed: u64,
    out: *mut *mut SgRealization,
) -> SgStatus {
    if out.is_null() {
        return SgStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let handle = match run.as_ref() {
        Some(h) => h,
        None => return SgStatus::NullArgument,
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        run_realization_with_table(
            &handle.run.grid,
            &handle.table,
            &handle.run.curves,
            &handle.run.params,
            seed,
        )
    }));
    match outcome {
        Ok(Ok(result)) => {
            *out = Box::into_raw(Box::new(SgRealization { result }));
            SgStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e);
            SgStatus::SimulationFailed
        }
        Err(_) => {
            set_error("simulation panicked");
            SgStatus::SimulationFailed
        }
    }
}

/// Release a realization. Null is a no-op.
///
/// # Safety
/// `r` must come from `sg_run_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_realization_close(r: *mut SgRealization) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Trajectory length; 0 for a null handle.
///
/// # Safety
/// `r` must be a live handle from `sg_run_simulate` or null.
#[no_mangle]
pub unsafe extern "C" fn sg_realization_steps(r: *const SgRealization) -> usize {
    r.as_ref().map_or(0, |h| h.result.trajectory.len())
}

/// Grid performance (served-customer fraction) at one step.
///
/// # Safety
/// `r` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_realization_performance(
    r: *const SgRealization,
    step: usize,
    out: *mut f64,
) -> SgStatus {
    let handle = match r.as_ref() {
        Some(h) => h,
        None => return SgStatus::NullArgument,
    };
    if out.is_null() {
        return SgStatus::NullArgument;
    }
    match handle.result.trajectory.get(step) {
        Some(&p) => {
            *out = p;
            SgStatus::Ok
        }
        None => {
            set_error("step index past the end of the trajectory");
            SgStatus::OutOfRange
        }
    }
}

/// Blackout step index, or -1 if the realization never blacked out
/// (also -1 for a null handle).
///
/// # Safety
/// `r` must be a live handle from `sg_run_simulate` or null.
#[no_mangle]
pub unsafe extern "C" fn sg_realization_blackout_step(r: *const SgRealization) -> i64 {
    r.as_ref()
        .and_then(|h| h.result.blackout_step)
        .map_or(-1, |s| s as i64)
}

fn json_out(value: &impl serde::Serialize, out: *mut *mut c_char) -> SgStatus {
    match serde_json::to_string(value) {
        Ok(s) => match CString::new(s) {
            Ok(c) => {
                unsafe { *out = c.into_raw() };
                SgStatus::Ok
            }
            Err(_) => {
                set_error("serialized JSON contained a NUL byte");
                SgStatus::SerializeFailed
            }
        },
        Err(e) => {
            set_error(&e.to_string());
            SgStatus::SerializeFailed
        }
    }
}

/// Full realization record (trajectory, events, failures) as a JSON string.
/// Free the string with sg_string_free().
///
/// # Safety
/// `r` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_realization_json(
    r: *const SgRealization,
    out: *mut *mut c_char,
) -> SgStatus {
    if out.is_null() {
        return SgStatus::NullArgument;
    }
    *out = ptr::null_mut();
    match r.as_ref() {
        Some(h) => json_out(&h.result, out),
        None => SgStatus::NullArgument,
    }
}

/// Run an `n`-realization ensemble with seeds derived from `master_seed`
/// and return the summary (probabilities, histograms, quantiles, critical
/// indices) as a JSON string. Free the string with sg_string_free().
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_run_ensemble_json(
    run: *const SgRun,
    n: usize,
    master_seed: u64,
    out: *mut *mut c_char,
) -> SgStatus {
    if out.is_null() {
        return SgStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let handle = match run.as_ref() {
        Some(h) => h,
        None => return SgStatus::NullArgument,
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let inputs = EnsembleInputs {
            grid: &handle.run.grid,
            table: &handle.table,
            curves: &handle.run.curves,
            params: &handle.run.params,
        };
        run_ensemble(&inputs, n, master_seed)
    }));
    match outcome {
        Ok((_, summary)) => json_out(&summary, out),
        Err(_) => {
            set_error("ensemble panicked");
            SgStatus::SimulationFailed
        }
    }
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use stormgrid::testbed::{write_testbed, TestbedKind};

    fn open_toy() -> (*mut SgRun, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        write_testbed(TestbedKind::ToyRadial, dir.path()).unwrap();
        let path = CString::new(dir.path().join("config.json").to_str().unwrap()).unwrap();
        let mut run: *mut SgRun = ptr::null_mut();
        let status = unsafe { sg_run_open(path.as_ptr(), &mut run) };
        assert_eq!(status, SgStatus::Ok, "{:?}", unsafe {
            CStr::from_ptr(sg_last_error()).to_string_lossy()
        });
        (run, dir)
    }

    #[test]
    fn open_simulate_inspect_close() {
        let (run, _dir) = open_toy();
        unsafe {
            let steps = sg_run_steps(run);
            assert!(steps > 0);
            let mut r: *mut SgRealization = ptr::null_mut();
            assert_eq!(sg_run_simulate(run, 11, &mut r), SgStatus::Ok);
            assert_eq!(sg_realization_steps(r), steps);
            let mut p = f64::NAN;
            assert_eq!(sg_realization_performance(r, 0, &mut p), SgStatus::Ok);
            assert!((0.0..=1.0).contains(&p));
            assert_eq!(
                sg_realization_performance(r, steps, &mut p),
                SgStatus::OutOfRange
            );
            let mut json: *mut c_char = ptr::null_mut();
            assert_eq!(sg_realization_json(r, &mut json), SgStatus::Ok);
            let text = CStr::from_ptr(json).to_str().unwrap();
            assert!(text.contains("\"trajectory\""));
            sg_string_free(json);
            sg_realization_close(r);
            sg_run_close(run);
        }
    }

    #[test]
    fn ensemble_json_is_deterministic() {
        let (run, _dir) = open_toy();
        unsafe {
            let mut a: *mut c_char = ptr::null_mut();
            let mut b: *mut c_char = ptr::null_mut();
            assert_eq!(sg_run_ensemble_json(run, 5, 2022, &mut a), SgStatus::Ok);
            assert_eq!(sg_run_ensemble_json(run, 5, 2022, &mut b), SgStatus::Ok);
            assert_eq!(
                CStr::from_ptr(a).to_bytes(),
                CStr::from_ptr(b).to_bytes()
            );
            sg_string_free(a);
            sg_string_free(b);
            sg_run_close(run);
        }
    }

    #[test]
    fn bad_inputs_report_status_codes() {
        unsafe {
            let mut run: *mut SgRun = ptr::null_mut();
            assert_eq!(
                sg_run_open(ptr::null(), &mut run),
                SgStatus::NullArgument
            );
            let missing = CString::new("/nonexistent/config.json").unwrap();
            assert_eq!(
                sg_run_open(missing.as_ptr(), &mut run),
                SgStatus::LoadFailed
            );
            assert!(run.is_null());
            let msg = CStr::from_ptr(sg_last_error()).to_string_lossy();
            assert!(!msg.is_empty());
            // null handles degrade gracefully
            assert_eq!(sg_run_steps(ptr::null()), 0);
            assert_eq!(sg_realization_blackout_step(ptr::null()), -1);
            sg_run_close(ptr::null_mut());
            sg_realization_close(ptr::null_mut());
            sg_string_free(ptr::null_mut());
        }
    }
}
