use super::*;
use crate::flow::Trajectory;
use std::path::PathBuf;

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn small_disc() -> Scenario {
    Scenario::from_json(
        r#"{
            "name": "small_disc",
            "measure": { "surface": "disc" },
            "chart": { "kind": "ball", "radius": 1.0, "n": 32 },
            "h_list": [0.05],
            "delta_list": [0.0],
            "schedule": { "kind": "geometric", "dt0": 1e-4, "growth": 1.5, "dt_max": 0.02 },
            "t_end": 0.2,
            "mass_gain": { "r": 0.25, "r_tilde": 0.5, "grid": 3 },
            "checks": ["area_law", "chen", "mass_gain"]
        }"#,
    )
    .unwrap()
}

fn plane_gaussian() -> Scenario {
    Scenario::load(&scenario_dir().join("plane_gaussian.json")).unwrap()
}

fn err_text(sc: &Scenario) -> String {
    sc.validate().unwrap_err().to_string()
}

#[test]
fn shipped_scenarios_parse_and_validate() {
    let mut seen = 0;
    for entry in std::fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        let loaded = Scenario::load(&path);
        if path.file_name().unwrap() == "empty.json" {
            assert!(loaded.unwrap_err().to_string().contains("T = 0, no flow exists"));
        } else {
            loaded.unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
        seen += 1;
    }
    assert!(seen >= 10);
}

#[test]
fn scenario_round_trips_through_json() {
    let sc = plane_gaussian();
    let back = Scenario::from_json(&serde_json::to_string(&sc).unwrap()).unwrap();
    assert_eq!(sc, back);
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let text = serde_json::to_string(&small_disc()).unwrap().replacen('{', r#"{"colour": 1,"#, 1);
    assert!(matches!(Scenario::from_json(&text), Err(Error::Parse(_))));
    let mut sc = small_disc();
    sc.version = 7;
    assert!(err_text(&sc).contains("version 7"));
}

#[test]
fn lists_must_be_nonempty_and_compatible() {
    let mut sc = small_disc();
    sc.h_list.clear();
    assert!(err_text(&sc).contains("nonempty"));
    let mut sc = small_disc();
    sc.h_list = vec![0.1, 0.05, 0.025];
    sc.delta_list = vec![0.0, 0.0];
    assert!(err_text(&sc).contains("delta_list"));
    sc.delta_list = vec![0.01];
    assert_eq!(sc.levels(), 3);
    assert_eq!(sc.level(2), (0.025, 0.01));
}

#[test]
fn duplicate_checks_are_rejected() {
    let mut sc = small_disc();
    sc.checks.push(CheckKind::Chen);
    assert!(err_text(&sc).contains("twice"));
}

#[test]
fn t_end_must_stay_below_the_maximal_time() {
    let mut sc = plane_gaussian();
    sc.t_end = 1.0;
    assert!(err_text(&sc).contains("maximal time"));
    let mut sc = small_disc();
    sc.t_end = 0.0;
    assert!(err_text(&sc).contains("start time"));
}

#[test]
fn check_specific_inputs_are_required() {
    let mut sc = small_disc();
    sc.checks = vec![CheckKind::Ordering];
    assert!(err_text(&sc).contains("lower"));
    sc.checks = vec![CheckKind::Exhaustion];
    assert!(err_text(&sc).contains("radii"));
    sc.checks = vec![CheckKind::Uniqueness];
    assert!(err_text(&sc).contains("kernels"));
    sc.checks = vec![CheckKind::Deeper];
    assert!(err_text(&sc).contains("sphere"));
    sc.checks = vec![CheckKind::Chen];
    sc.run_to_extinction = true;
    assert!(err_text(&sc).contains("run_to_extinction"));
    let mut sc = small_disc();
    sc.mass_gain.r_tilde = 0.1;
    assert!(err_text(&sc).contains("mass gain"));
}

#[test]
fn contraction_parameters_are_checked() {
    let mut sc = Scenario::load(&scenario_dir().join("plane_contraction_calibrate.json")).unwrap();
    sc.contraction = Some(ContractionParams { m: 1.5, radius: 3.0, c0: None });
    assert!(err_text(&sc).contains("m ∈ (0, 1)"));
}

#[test]
fn check_names_round_trip() {
    for kind in [
        CheckKind::AreaLaw,
        CheckKind::Chen,
        CheckKind::Ordering,
        CheckKind::MassGain,
        CheckKind::PlaneContraction,
        CheckKind::Uniqueness,
        CheckKind::Exhaustion,
        CheckKind::Potential,
        CheckKind::Deeper,
    ] {
        assert_eq!(CheckKind::parse(kind.name()).unwrap(), kind);
    }
    assert!(CheckKind::parse("curvature").is_err());
}

#[test]
fn entries_track_status_and_notes() {
    let mut e = CheckEntry::new(CheckKind::Chen, 1e-2);
    e.measure("a", 1.0).require(true, "never shown");
    assert_eq!(e.status, Status::Pass);
    e.require(false, "first").require(false, "second");
    assert_eq!(e.status, Status::Fail);
    assert_eq!(e.note, "first; second");
    let skipped = CheckEntry::new(CheckKind::Ordering, 0.0).skip("not ordered");
    assert!(skipped.passed());
    let report = Report {
        version: REPORT_VERSION,
        scenario: "s".into(),
        entries: vec![e, skipped],
        runtime_seconds: 0.0,
        threads: 1,
        trajectories: 0,
    };
    assert!(!report.all_passed());
    let summary = report.summary();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[0].starts_with("FAIL chen"));
    assert!(lines[1].starts_with("SKIP ordering"));
    let back = Report::from_json(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn small_campaign_reports_every_check_once() {
    let sc = small_disc();
    let campaign = run_campaign(&sc).unwrap();
    let report = verify(&campaign);
    let names: Vec<&str> = report.entries.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["area_law", "chen", "mass_gain"]);
    assert!(report.all_passed(), "{}", report.summary());
    assert_eq!(report.trajectories, 1);
    let times: Vec<f64> = campaign.reference().times();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    assert!(times.len() >= 9, "{times:?}");
}

#[test]
fn time_series_has_one_row_per_snapshot() {
    let campaign = run_campaign(&small_disc()).unwrap();
    let traj: &Trajectory = campaign.reference();
    let rows = time_series(traj).unwrap();
    assert_eq!(rows.len(), traj.snapshots.len());
    assert!(rows[0].min_u_over_t_defect.is_nan());
    assert!(rows.iter().skip(2).all(|r| r.min_u_over_t_defect >= -1e-9));
}

#[test]
fn simulate_writes_dumps_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let campaign = run_campaign(&small_disc()).unwrap();
    let files = simulate(&campaign, dir.path()).unwrap();
    let csv = files.iter().find(|p| p.extension().is_some_and(|e| e == "csv")).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,area,min_u_over_t_defect,min_K_plus_half_t,residuals");
    assert_eq!(text.lines().count(), campaign.reference().snapshots.len() + 1);
}

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("ricciflow").chain(args.iter().copied()))
}

#[test]
fn cli_missing_scenario_is_a_usage_error() {
    assert_eq!(cli(&["verify", "--scenario", "/nonexistent/scenario.json"]), 2);
    assert_eq!(cli(&["simulate", "--scenario", "/nonexistent/scenario.json"]), 2);
    assert_eq!(cli(&["report", "--input", "/nonexistent/report.json"]), 2);
}

#[test]
fn cli_refuses_the_trivial_plane_measure() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_dir().join("empty.json");
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["simulate", "--scenario", path.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn cli_rejects_bad_arguments_and_unknown_checks() {
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&[]), 2);
    let path = scenario_dir().join("round_sphere.json");
    assert_eq!(cli(&["verify", "--scenario", path.to_str().unwrap(), "--check", "curvature"]), 2);
}

#[test]
fn cli_verify_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("small.json");
    std::fs::write(&scenario, serde_json::to_string(&small_disc()).unwrap()).unwrap();
    let out = dir.path().join("out");
    let code = cli(&["verify", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report = out.join("report.json");
    assert_eq!(cli(&["report", "--input", report.to_str().unwrap()]), 0);

    let mut failing = Report::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    failing.entries[0].status = Status::Fail;
    std::fs::write(&report, serde_json::to_string(&failing).unwrap()).unwrap();
    assert_eq!(cli(&["report", "--input", report.to_str().unwrap()]), 1);
}
