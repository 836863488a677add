//! C ABI for the `ricciflow` library.
//!
//! Every function returns an [`RfStatus`]; on failure the message is kept
//! per thread and read with [`rf_last_error`]. Handles are opaque and owned
//! by the caller, who releases them with the matching `_free` function.
//! Strings returned through out-parameters are released with [`rf_string_free`].

use ricciflow::flow::maximal_time;
use ricciflow::geometry::hyperbolic_volume;
use ricciflow::harness::{run_campaign, simulate, verify, Campaign, Scenario};
use ricciflow::measure::MeasureSpec;
use ricciflow::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// An argument violates a documented precondition.
    InvalidArgument = 2,
    /// An argument lies outside the mathematical domain of the operation.
    Domain = 3,
    /// Malformed JSON or an unsupported schema version.
    Parse = 4,
    /// A solver failed to converge.
    Convergence = 5,
    /// A flow went extinct before the requested time.
    Extinction = 6,
    /// Reading or writing files failed.
    Io = 7,
    /// The operation is not available for this surface or chart.
    Unsupported = 8,
    /// A panic was caught at the boundary.
    Panic = 9,
}

/// A validated scenario.
pub struct RfScenario(Scenario);

/// The trajectories of a scenario.
pub struct RfCampaign(Campaign);

struct Failure(RfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Domain(_) => RfStatus::Domain,
            Error::Precondition(_) => RfStatus::InvalidArgument,
            Error::Convergence(_) => RfStatus::Convergence,
            Error::Extinction { .. } => RfStatus::Extinction,
            Error::Io(_) => RfStatus::Io,
            Error::Parse(_) => RfStatus::Parse,
            Error::Unsupported(_) => RfStatus::Unsupported,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).expect("interior nuls were removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(&format!("panic: {msg}"));
            RfStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(RfStatus::Null, format!("`{name}` is null"))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(RfStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior nuls were removed").into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Maximal existence time `T` of the flow from a measure given as JSON.
///
/// # Safety
/// `measure_json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_maximal_time(measure_json: *const c_char, out_t: *mut f64) -> RfStatus {
    guard(|| {
        let mu = MeasureSpec::from_json(text(measure_json, "measure_json")?)?;
        *out(out_t, "out_t")? = maximal_time(&mu, mu.surface);
        Ok(())
    })
}

/// Volume of `B_r(0)` in the complete hyperbolic metric of `B_radius(0)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_hyperbolic_volume(r: f64, radius: f64, out_volume: *mut f64) -> RfStatus {
    guard(|| {
        *out(out_volume, "out_volume")? = hyperbolic_volume(r, radius)?;
        Ok(())
    })
}

/// Parses and validates a scenario.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_scenario_from_json(json: *const c_char, out_scenario: *mut *mut RfScenario) -> RfStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let sc = Scenario::from_json(text(json, "json")?)?;
        *slot = Box::into_raw(Box::new(RfScenario(sc)));
        Ok(())
    })
}

/// Reads, parses and validates a scenario file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_scenario_load(path: *const c_char, out_scenario: *mut *mut RfScenario) -> RfStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let sc = Scenario::load(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(RfScenario(sc)));
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rf_scenario_free(scenario: *mut RfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs every trajectory the scenario needs.
///
/// # Safety
/// `scenario` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_campaign_run(scenario: *const RfScenario, out_campaign: *mut *mut RfCampaign) -> RfStatus {
    guard(|| {
        let sc = handle(scenario, "scenario")?;
        let slot = out(out_campaign, "out_campaign")?;
        let campaign = run_campaign(&sc.0)?;
        *slot = Box::into_raw(Box::new(RfCampaign(campaign)));
        Ok(())
    })
}

/// Releases a campaign. Null is ignored.
///
/// # Safety
/// `campaign` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rf_campaign_free(campaign: *mut RfCampaign) {
    if !campaign.is_null() {
        drop(Box::from_raw(campaign));
    }
}

/// Judges the requested checks. Writes the report as JSON (free with
/// [`rf_string_free`]) and whether every check passed.
///
/// # Safety
/// `campaign` must be a live handle and the out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn rf_campaign_verify(
    campaign: *const RfCampaign,
    out_report_json: *mut *mut c_char,
    out_all_passed: *mut bool,
) -> RfStatus {
    guard(|| {
        let c = handle(campaign, "campaign")?;
        let json_slot = out(out_report_json, "out_report_json")?;
        let passed_slot = out(out_all_passed, "out_all_passed")?;
        let report = verify(&c.0);
        let json = serde_json::to_string(&report).map_err(|e| Failure(RfStatus::Parse, e.to_string()))?;
        *passed_slot = report.all_passed();
        *json_slot = owned_string(json);
        Ok(())
    })
}

/// Writes snapshot dumps and CSV time series under `out_dir`.
///
/// # Safety
/// `campaign` must be a live handle and `out_dir` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rf_campaign_simulate(campaign: *const RfCampaign, out_dir: *const c_char) -> RfStatus {
    guard(|| {
        let c = handle(campaign, "campaign")?;
        simulate(&c.0, Path::new(text(out_dir, "out_dir")?))?;
        Ok(())
    })
}

/// Number of snapshots of the reference trajectory (first kernel, finest level).
///
/// # Safety
/// `campaign` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_campaign_snapshot_count(campaign: *const RfCampaign, out_count: *mut usize) -> RfStatus {
    guard(|| {
        let c = handle(campaign, "campaign")?;
        *out(out_count, "out_count")? = c.0.reference().snapshots.len();
        Ok(())
    })
}

/// Time and total chart area of snapshot `index` of the reference trajectory.
///
/// # Safety
/// `campaign` must be a live handle and the out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn rf_campaign_snapshot(
    campaign: *const RfCampaign,
    index: usize,
    out_t: *mut f64,
    out_area: *mut f64,
) -> RfStatus {
    guard(|| {
        let traj = handle(campaign, "campaign")?.0.reference();
        let (t_slot, area_slot) = (out(out_t, "out_t")?, out(out_area, "out_area")?);
        let s = traj.snapshots.get(index).ok_or_else(|| {
            Failure(RfStatus::InvalidArgument, format!("snapshot {index} of {}", traj.snapshots.len()))
        })?;
        *t_slot = s.t;
        *area_slot = traj.area(index);
        Ok(())
    })
}

/// Copies the conformal factor of snapshot `index` into `buffer`.
///
/// Values are in chart node order and NaN at nodes outside the computational
/// domain. `out_len` receives the field length. With a null `buffer` only the length
/// is reported; a buffer shorter than the field is an invalid argument.
///
/// # Safety
/// `buffer` must hold `capacity` doubles when non-null and `out_len` be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_campaign_field(
    campaign: *const RfCampaign,
    index: usize,
    buffer: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> RfStatus {
    guard(|| {
        let traj = handle(campaign, "campaign")?.0.reference();
        let len_slot = out(out_len, "out_len")?;
        let s = traj.snapshots.get(index).ok_or_else(|| {
            Failure(RfStatus::InvalidArgument, format!("snapshot {index} of {}", traj.snapshots.len()))
        })?;
        *len_slot = s.u.len();
        if buffer.is_null() {
            return Ok(());
        }
        if capacity < s.u.len() {
            return Err(Failure(
                RfStatus::InvalidArgument,
                format!("buffer holds {capacity} values, the field has {}", s.u.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buffer, s.u.len()).copy_from_slice(&s.u);
        Ok(())
    })
}
