use super::*;
use crate::geometry::{hyperbolic_factor, round_background};
use crate::measure::{AcDensity, CurveMeasure};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn big_bang_state(n: usize, t: f64) -> (Stepper, FlowState) {
    let grid = ChartGrid::Cartesian(CartesianGrid::new(1.0, n).unwrap());
    let stepper = Stepper::new(SurfaceKind::Disc, &grid).unwrap();
    let ChartGrid::Cartesian(g) = &grid else { unreachable!() };
    let u0: Vec<f64> = (0..g.len())
        .map(|k| {
            let x = g.point(k);
            hyperbolic_factor(1.0, x).map(|h| 2.0 * t * h).unwrap_or(f64::NAN)
        })
        .collect();
    let mut s = stepper.initial_state(u0, t).unwrap();
    s.t_start = 0.0;
    (stepper, s)
}

fn sup_rel_error_big_bang(s: &FlowState, radius: f64) -> f64 {
    let ChartGrid::Cartesian(g) = &s.grid else { unreachable!() };
    (0..g.len())
        .filter(|&k| g.point(k)[0].hypot(g.point(k)[1]) <= radius)
        .map(|k| {
            let exact = 2.0 * s.t * hyperbolic_factor(1.0, g.point(k)).unwrap();
            (s.u[k] / exact - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn maximal_time_trichotomy() {
    let round = |surface| MeasureSpec { surface, ac: Some(AcDensity::Round { scale: 1.0 }), curves: vec![] };
    assert_eq!(maximal_time(&round(SurfaceKind::Disc), SurfaceKind::Disc), f64::INFINITY);
    assert_relative_eq!(maximal_time(&round(SurfaceKind::Plane), SurfaceKind::Plane), 1.0);
    assert_relative_eq!(maximal_time(&round(SurfaceKind::Sphere), SurfaceKind::Sphere), 0.5);
    assert_eq!(maximal_time(&MeasureSpec::trivial(SurfaceKind::Plane), SurfaceKind::Plane), 0.0);
}

#[test]
fn big_bang_step_error_halves_under_refinement() {
    let mut errs = Vec::new();
    for n in [32usize, 64] {
        let (stepper, s) = big_bang_state(n, 0.1);
        let s1 = stepper.step(&s, 0.05).unwrap();
        assert!(s1.diagnostics.residual <= 1e-9);
        errs.push(sup_rel_error_big_bang(&s1, 0.8));
    }
    // The collar sits where h_R blows up; the scheme is first order there.
    assert!(errs[1] < errs[0] / 1.8, "{errs:?}");
}

#[test]
fn small_steps_are_consistent() {
    let (stepper, s) = big_bang_state(32, 0.1);
    let mut prev = f64::INFINITY;
    for dt in [1e-2, 1e-3, 1e-4] {
        let s1 = stepper.step(&s, dt).unwrap();
        let change = stepper
            .layout()
            .unwrap()
            .active_indices()
            .map(|k| (s1.u[k] - s.u[k]).abs() / s.u[k])
            .fold(0.0, f64::max);
        assert!(change < prev);
        prev = change;
    }
    // The exact relative growth over dt is dt/t.
    assert!(prev < 1.5e-3, "{prev}");
}

#[test]
fn richardson_two_half_steps() {
    let mu = MeasureSpec {
        surface: SurfaceKind::Disc,
        ac: Some(AcDensity::Gaussian { center: [0.1, 0.0], sigma: 0.2, mass: 1.0 }),
        curves: vec![],
    };
    let grid = ChartSpec::Ball { radius: 1.0, n: 32 }.build().unwrap();
    let stepper = Stepper::new(SurfaceKind::Disc, &grid).unwrap();
    let u0 = smooth_with(&mu, 0.1, Mollifier::Bump).unwrap().sample(&grid).unwrap().into_values();
    let s0 = stepper.initial_state(u0, 0.0).unwrap();
    let s0 = stepper.step(&s0, 0.05).unwrap();
    let diff = |dt: f64| {
        let one = stepper.step(&s0, dt).unwrap();
        let two = stepper.step(&stepper.step(&s0, dt / 2.0).unwrap(), dt / 2.0).unwrap();
        stepper.layout().unwrap().active_indices().map(|k| (one.u[k] - two.u[k]).abs()).fold(0.0, f64::max)
    };
    let (a, b) = (diff(0.01), diff(0.005));
    assert!(b < a / 3.0, "{a} {b}");
}

#[test]
fn round_sphere_loses_two_dt_per_step() {
    let grid = ChartGrid::from(SphereGrid::new(8));
    let stepper = Stepper::new(SurfaceKind::Sphere, &grid).unwrap();
    let s = stepper.initial_state(vec![0.7; grid.len()], 0.0).unwrap();
    let s1 = stepper.step(&s, 0.01).unwrap();
    assert!(s1.u.iter().all(|u| (u - 0.68).abs() < 1e-13));
    let c = stepper.initial_state(vec![4.0 * 0.01; grid.len()], 0.0).unwrap();
    let c1 = stepper.step(&c, 0.01).unwrap();
    let worst = c1.u.iter().map(|u| (u - 0.02).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
    let tiny = stepper.initial_state(vec![0.03; grid.len()], 0.2).unwrap();
    match stepper.step(&tiny, 0.01) {
        Err(Error::Extinction { time, .. }) => assert_relative_eq!(time, 0.2 + 0.03 * 4.0 * PI / (8.0 * PI)),
        other => panic!("expected extinction, got {other:?}"),
    }
}

#[test]
fn sphere_area_drops_by_eight_pi_dt() {
    let g = SphereGrid::new(24);
    let u0: Vec<f64> = (0..g.len()).map(|i| 1.0 + 0.3 * g.unit_vector(i)[2] + 0.2 * g.unit_vector(i)[0].powi(2)).collect();
    let u0 = g.project(&u0);
    let grid = ChartGrid::from(g);
    let stepper = Stepper::new(SurfaceKind::Sphere, &grid).unwrap();
    let ChartGrid::Sphere(g) = &grid else { unreachable!() };
    let s = stepper.initial_state(u0, 0.0).unwrap();
    let s1 = stepper.step(&s, 0.01).unwrap();
    let drop = g.integrate(&s.u) - g.integrate(&s1.u);
    assert!((drop - 8.0 * PI * 0.01).abs() < 1e-6, "{drop}");
}

#[test]
fn log_polar_area_law_is_discrete_exact() {
    let mu = MeasureSpec {
        surface: SurfaceKind::Plane,
        ac: Some(AcDensity::Gaussian { center: [0.0, 0.0], sigma: 1.0, mass: 4.0 * PI }),
        curves: vec![],
    };
    let chart = ChartSpec::LogPolar { r_min: (-4.0f64).exp(), r_max: 20f64.exp(), n_theta: 16 };
    let opts = RunOptions { schedule: DtSchedule::Uniform { dt: 0.02 }, snapshots: vec![0.1], kernel: Mollifier::Bump };
    let traj = run_from_measure(&mu, &chart, 0.1, 0.0, 0.2, &opts).unwrap();
    let ChartGrid::LogPolar(g) = &traj.grid else { unreachable!() };
    let vol = g.volumes();
    let cyl = |i: usize| traj.snapshots[i].u.iter().zip(&vol).map(|(v, w)| v * w).sum::<f64>();
    for i in 1..traj.snapshots.len() {
        let t = traj.snapshots[i].t;
        assert_relative_eq!(cyl(i), cyl(0) - 4.0 * PI * t, max_relative = 1e-7);
        // The excised disc adds π·u(0)·r_min², a small moving correction.
        assert_relative_eq!(traj.area(i), cyl(0) - 4.0 * PI * t, max_relative = 1e-3);
    }
}

#[test]
fn trivial_plane_measure_refused_on_whole_plane() {
    let chart = ChartSpec::LogPolar { r_min: 0.01, r_max: 100.0, n_theta: 16 };
    let opts = RunOptions { schedule: DtSchedule::Uniform { dt: 0.01 }, snapshots: vec![], kernel: Mollifier::Bump };
    let err = run_from_measure(&MeasureSpec::trivial(SurfaceKind::Plane), &chart, 0.1, 0.0, 0.1, &opts).unwrap_err();
    assert!(err.to_string().contains("T = 0"), "{err}");
}

#[test]
fn trivial_disc_run_stays_above_big_bang() {
    let opts = RunOptions {
        schedule: DtSchedule::Geometric { dt0: 1e-4, growth: 1.5, dt_max: 0.02 },
        snapshots: vec![0.05, 0.1],
        kernel: Mollifier::Bump,
    };
    let traj = run_from_measure(&MeasureSpec::trivial(SurfaceKind::Disc), &ChartSpec::Ball { radius: 1.0, n: 32 }, 0.01, 0.0, 0.2, &opts)
        .unwrap();
    let ChartGrid::Cartesian(g) = &traj.grid else { unreachable!() };
    for i in 1..traj.snapshots.len() {
        let t = traj.snapshots[i].t;
        for k in traj.interior_nodes() {
            let bb = 2.0 * t * hyperbolic_factor(1.0, g.point(k)).unwrap();
            assert!(traj.snapshots[i].u[k] >= bb * (1.0 - 1e-2), "t = {t}");
        }
    }
}

#[test]
fn exhaustion_of_trivial_measure_decreases_in_radius() {
    let opts = RunOptions { schedule: DtSchedule::Uniform { dt: 0.05 }, snapshots: vec![0.1], kernel: Mollifier::Bump };
    let mu = MeasureSpec {
        surface: SurfaceKind::Plane,
        ac: None,
        curves: vec![CurveMeasure { points: vec![[-0.5, 0.0], [0.5, 0.2]], density: 1.0 }],
    };
    let ex = run_exhaustion(&mu, &[2.0, 3.0, 4.0], 0.125, 0.2, 0.0, 0.2, &opts).unwrap();
    assert_eq!(ex.violations, 0, "max violation {}", ex.max_violation);
    assert!(ex.gaps[1] < ex.gaps[0]);
}

#[test]
fn snapshot_dump_round_trip() {
    let (stepper, s) = big_bang_state(16, 0.1);
    let opts = RunOptions { schedule: DtSchedule::Uniform { dt: 0.05 }, snapshots: vec![], kernel: Mollifier::Bump };
    let traj = evolve(&stepper, s, &opts, 0.2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let index = io::write_trajectory(&traj, dir.path()).unwrap();
    let entries = io::read_index(&index).unwrap();
    assert_eq!(entries.len(), traj.snapshots.len());
    let (meta, values) = io::read_snapshot(&dir.path().join(&entries[1].data)).unwrap();
    assert_eq!(meta.n, 16);
    assert_eq!(meta.radius, Some(1.0));
    assert_relative_eq!(meta.t, 0.2);
    for (a, b) in values.iter().zip(&traj.snapshots[1].u) {
        assert!(a == b || (a.is_nan() && b.is_nan()));
    }
}

#[test]
fn log_polar_sampling_matches_round_factor() {
    let g = LogPolarGrid::isotropic(0.01, 100.0, 16, 8).unwrap();
    let s = smooth_with(&MeasureSpec::trivial(SurfaceKind::Plane), 0.3, Mollifier::Bump).unwrap();
    let v = s.sample(&ChartGrid::LogPolar(g.clone())).unwrap();
    for idx in 0..g.len() {
        let x = g.point(idx);
        let r2 = x[0] * x[0] + x[1] * x[1];
        assert_relative_eq!(v.values()[idx], 0.3 * round_background(x) * r2, max_relative = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn ordered_data_stay_ordered(scale in 0.1f64..0.9, cx in -0.3f64..0.3) {
        let mu = MeasureSpec {
            surface: SurfaceKind::Disc,
            ac: Some(AcDensity::Gaussian { center: [cx, 0.0], sigma: 0.2, mass: 2.0 }),
            curves: vec![],
        };
        let opts = RunOptions { schedule: DtSchedule::Uniform { dt: 0.02 }, snapshots: vec![], kernel: Mollifier::Bump };
        let chart = ChartSpec::Ball { radius: 1.0, n: 32 };
        let big = run_from_measure(&mu, &chart, 0.05, 0.0, 0.1, &opts).unwrap();
        let small = run_from_measure(&mu.scaled(scale), &chart, 0.05, 0.0, 0.1, &opts).unwrap();
        for (a, b) in big.snapshots.iter().zip(&small.snapshots) {
            for k in big.interior_nodes() {
                prop_assert!(b.u[k] <= a.u[k] * (1.0 + 1e-9));
            }
        }
    }
}
