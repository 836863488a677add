use ricciflow_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

const SMALL_DISC: &str = r#"{
    "name": "small_disc",
    "measure": { "surface": "disc" },
    "chart": { "kind": "ball", "radius": 1.0, "n": 32 },
    "h_list": [0.05],
    "delta_list": [0.0],
    "schedule": { "kind": "geometric", "dt0": 1e-4, "growth": 1.5, "dt_max": 0.02 },
    "t_end": 0.2,
    "checks": ["area_law", "chen"]
}"#;

fn last_error() -> String {
    let p = rf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn scenario(json: &str) -> *mut RfScenario {
    let text = CString::new(json).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { rf_scenario_from_json(text.as_ptr(), &mut sc) }, RfStatus::Ok);
    sc
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(rf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn maximal_time_of_a_plane_gaussian() {
    let json = CString::new(r#"{"surface":"plane","ac":{"kind":"gaussian","center":[0.0,0.0],"sigma":1.0,"mass":6.283185307179586}}"#).unwrap();
    let mut t = 0.0;
    assert_eq!(unsafe { rf_maximal_time(json.as_ptr(), &mut t) }, RfStatus::Ok);
    assert!((t - 0.5).abs() < 1e-12, "{t}");
}

#[test]
fn malformed_measure_is_a_parse_error() {
    let json = CString::new("{not json").unwrap();
    let mut t = 0.0;
    assert_eq!(unsafe { rf_maximal_time(json.as_ptr(), &mut t) }, RfStatus::Parse);
    assert!(!last_error().is_empty());
}

#[test]
fn hyperbolic_volume_domain() {
    let mut v = 0.0;
    assert_eq!(unsafe { rf_hyperbolic_volume(0.5, 1.0, &mut v) }, RfStatus::Ok);
    let exact = 4.0 * std::f64::consts::PI * 0.25 / (1.0 - 0.25);
    assert!((v - exact).abs() < 1e-9 * exact, "{v} vs {exact}");
    assert_eq!(unsafe { rf_hyperbolic_volume(2.0, 1.0, &mut v) }, RfStatus::Domain);
    assert!(last_error().contains('2'));
}

#[test]
fn null_pointers_are_reported() {
    let mut t = 0.0;
    assert_eq!(unsafe { rf_maximal_time(ptr::null(), &mut t) }, RfStatus::Null);
    assert!(last_error().contains("measure_json"));
    assert_eq!(unsafe { rf_hyperbolic_volume(0.5, 1.0, ptr::null_mut()) }, RfStatus::Null);
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { rf_campaign_run(ptr::null(), &mut c) }, RfStatus::Null);
    unsafe {
        rf_scenario_free(ptr::null_mut());
        rf_campaign_free(ptr::null_mut());
        rf_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_scenarios_are_refused() {
    let text = CString::new(SMALL_DISC.replace("0.2,", "0.0,")).unwrap();
    let mut sc = ptr::null_mut();
    let status = unsafe { rf_scenario_from_json(text.as_ptr(), &mut sc) };
    assert_ne!(status, RfStatus::Ok);
    assert!(sc.is_null());
    let path = CString::new("/nonexistent/scenario.json").unwrap();
    assert_eq!(unsafe { rf_scenario_load(path.as_ptr(), &mut sc) }, RfStatus::Io);
}

#[test]
fn campaign_lifecycle() {
    let sc = scenario(SMALL_DISC);
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { rf_campaign_run(sc, &mut c) }, RfStatus::Ok);
    unsafe { rf_scenario_free(sc) };

    let mut json = ptr::null_mut();
    let mut passed = false;
    assert_eq!(unsafe { rf_campaign_verify(c, &mut json, &mut passed) }, RfStatus::Ok);
    let report = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { rf_string_free(json) };
    assert!(passed, "{report}");
    assert!(report.contains("area_law") && report.contains("chen"));

    let mut count = 0;
    assert_eq!(unsafe { rf_campaign_snapshot_count(c, &mut count) }, RfStatus::Ok);
    assert!(count >= 2);
    let (mut t, mut area) = (0.0, 0.0);
    assert_eq!(unsafe { rf_campaign_snapshot(c, count - 1, &mut t, &mut area) }, RfStatus::Ok);
    assert!((t - 0.2).abs() < 1e-12);
    assert!(area > 0.0);
    assert_eq!(unsafe { rf_campaign_snapshot(c, count, &mut t, &mut area) }, RfStatus::InvalidArgument);

    let mut len = 0;
    assert_eq!(unsafe { rf_campaign_field(c, 0, ptr::null_mut(), 0, &mut len) }, RfStatus::Ok);
    assert!(len > 0);
    let mut short = vec![0.0; len - 1];
    let status = unsafe { rf_campaign_field(c, 0, short.as_mut_ptr(), short.len(), &mut len) };
    assert_eq!(status, RfStatus::InvalidArgument);
    let mut field = vec![0.0; len];
    assert_eq!(unsafe { rf_campaign_field(c, count - 1, field.as_mut_ptr(), len, &mut len) }, RfStatus::Ok);
    let active: Vec<f64> = field.into_iter().filter(|u| !u.is_nan()).collect();
    assert!(!active.is_empty());
    assert!(active.iter().all(|&u| u.is_finite() && u > 0.0));

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rf_campaign_simulate(c, out.as_ptr()) }, RfStatus::Ok);
    assert!(std::fs::read_dir(dir.path()).unwrap().count() > 0);
    unsafe { rf_campaign_free(c) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ricciflow.h")).unwrap();
    for name in [
        "rf_last_error",
        "rf_version",
        "rf_string_free",
        "rf_maximal_time",
        "rf_hyperbolic_volume",
        "rf_scenario_from_json",
        "rf_scenario_load",
        "rf_scenario_free",
        "rf_campaign_run",
        "rf_campaign_free",
        "rf_campaign_verify",
        "rf_campaign_simulate",
        "rf_campaign_snapshot_count",
        "rf_campaign_snapshot",
        "rf_campaign_field",
        "RF_STATUS_PANIC = 9",
        "typedef struct RfCampaign RfCampaign",
    ] {
        assert!(header.contains(name), "{name} missing from the header");
    }
}

#[test]
fn header_compiles_as_c99() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"ricciflow.h\"\nint main(void) {\n  double t;\n  RfStatus s = rf_maximal_time(0, &t);\n  return s == RF_STATUS_NULL ? 0 : 1;\n}\n",
    )
    .unwrap();
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = std::process::Command::new(compiler)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(concat!("-I", env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}
