//! Running the trajectories of a scenario and assembling its report.

use super::checks::{self, chen_rows, default_test_functions};
use super::{CheckEntry, CheckKind, Report, Scenario, REPORT_VERSION};
use crate::error::{Error, Result};
use crate::flow::{evolve, initial_state_from_measure, io, run_exhaustion, Exhaustion, RunOptions, Trajectory};
use crate::geometry::ChartGrid;
use crate::measure::{MeasureSpec, Mollifier};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Trajectories of a scenario.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub scenario: Scenario,
    /// `runs[k][l]`: kernel `k` at level `l`.
    pub runs: Vec<Vec<Trajectory>>,
    /// Flow of the `lower` measure at the finest level with the first kernel.
    pub lower: Option<Trajectory>,
    pub exhaustion: Option<Exhaustion>,
    pub runtime_seconds: f64,
}

impl Campaign {
    /// First kernel at the finest level.
    pub fn reference(&self) -> &Trajectory {
        self.runs[0].last().expect("scenarios have at least one level")
    }

    /// Labelled trajectories: every run, then the lower flow.
    pub fn labelled(&self) -> Vec<(String, &Trajectory)> {
        let mut out = Vec::new();
        for (k, kernel) in self.scenario.kernels.iter().enumerate() {
            for l in 0..self.scenario.levels() {
                let (h, d) = self.scenario.level(l);
                out.push((format!("{}_{}_h{h}_d{d}", self.scenario.name, kernel_name(*kernel)), &self.runs[k][l]));
            }
        }
        if let Some(lower) = &self.lower {
            out.push((format!("{}_lower", self.scenario.name), lower));
        }
        out
    }
}

fn kernel_name(k: Mollifier) -> &'static str {
    match k {
        Mollifier::Bump => "bump",
        Mollifier::TruncatedGaussian => "truncated_gaussian",
    }
}

/// Normalized sphere times at which the potential and deeper checks look.
fn sphere_times(epsilons: &[f64]) -> Vec<f64> {
    let mut s = vec![0.005, 0.01, 0.02, 0.03, 0.05, 0.1, 0.15, 0.2, 0.25];
    for &e in epsilons {
        s.push(e);
        s.extend([0.025, 0.05, 0.1, 0.15, 0.2].iter().map(|d| e + d).filter(|t| *t < 0.25 - e));
    }
    s
}

/// Snapshot times needed by the requested checks for a flow started at `delta`.
/// `lambda` is the area normalization of a sphere flow.
fn snapshot_plan(sc: &Scenario, delta: f64, lambda: Option<f64>) -> Vec<f64> {
    let c = sc.t_end - delta;
    let dt = sc.schedule.max_dt();
    let mut t: Vec<f64> = sc.snapshots.clone();
    let frac = |t: &mut Vec<f64>, n: usize| t.extend((1..=n).map(|k| delta + c * k as f64 / n as f64));
    frac(&mut t, 4);
    if sc.requests(CheckKind::AreaLaw) {
        frac(&mut t, 8);
    }
    if sc.requests(CheckKind::MassGain) || sc.requests(CheckKind::PlaneContraction) {
        frac(&mut t, sc.mass_gain.grid);
    }
    if sc.requests(CheckKind::Uniqueness) {
        t.push(sc.probe.time.unwrap_or(sc.t_end));
    }
    let wants_potential = sc.requests(CheckKind::Potential) || sc.requests(CheckKind::Deeper);
    match lambda {
        Some(lambda) if wants_potential => {
            let eps = if sc.requests(CheckKind::Deeper) { sc.epsilons.as_slice() } else { &[] };
            t.extend(sphere_times(eps).iter().map(|s| delta + s * lambda));
            t.push(delta + 0.25 * lambda - dt);
        }
        None if sc.requests(CheckKind::Potential) => {
            t.extend([0.0005, 0.001, 0.025, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8].iter().map(|f| delta + f * c));
            t.push(sc.t_end - dt);
        }
        _ => {}
    }
    let horizon = match lambda {
        Some(l) if sc.run_to_extinction => delta + 0.5 * l,
        _ => sc.t_end,
    };
    t.retain(|s| *s > delta && *s < horizon);
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    t
}

fn run_level(sc: &Scenario, mu: &MeasureSpec, level: usize, kernel: Mollifier) -> Result<Trajectory> {
    let (h, delta) = sc.level(level);
    let (stepper, state) = initial_state_from_measure(mu, &sc.chart, h, delta, kernel)?;
    let area = match stepper.grid() {
        ChartGrid::Sphere(g) => Some(g.integrate(&state.u)),
        _ => None,
    };
    let lambda = area.map(|a| a / (4.0 * PI));
    let opts = RunOptions { schedule: sc.schedule, snapshots: snapshot_plan(sc, delta, lambda), kernel };
    let end = match area {
        // Aim well past the extinction time of the smoothed data.
        Some(a) if sc.run_to_extinction => delta + 2.0 * a / (8.0 * PI) + 1.0,
        _ => sc.t_end,
    };
    let mut traj = evolve(&stepper, state, &opts, end)?;
    if sc.run_to_extinction && traj.meta.extinction_time.is_none() {
        return Err(Error::Convergence(format!("sphere flow did not go extinct by t = {end}")));
    }
    traj.meta.measure = Some(mu.clone());
    traj.meta.h = Some(h);
    traj.meta.kernel = Some(kernel);
    traj.meta.chart = Some(sc.chart.clone());
    Ok(traj)
}

/// Runs every trajectory the scenario's checks need, in parallel.
pub fn run_campaign(sc: &Scenario) -> Result<Campaign> {
    sc.validate()?;
    let start = Instant::now();
    let finest = sc.levels() - 1;
    let mut jobs: Vec<(Option<usize>, usize, Mollifier)> = Vec::new();
    for (k, kernel) in sc.kernels.iter().enumerate() {
        for l in 0..sc.levels() {
            jobs.push((Some(k), l, *kernel));
        }
    }
    let needs_lower = sc.requests(CheckKind::Ordering) || sc.requests(CheckKind::PlaneContraction);
    if needs_lower {
        jobs.push((None, finest, sc.kernels[0]));
    }
    let done: Vec<Trajectory> = jobs
        .par_iter()
        .map(|(k, l, kernel)| {
            let mu = if k.is_some() { &sc.measure } else { sc.lower.as_ref().expect("validated") };
            run_level(sc, mu, *l, *kernel)
        })
        .collect::<Result<_>>()?;
    let mut done = done.into_iter();
    let runs: Vec<Vec<Trajectory>> =
        sc.kernels.iter().map(|_| (0..sc.levels()).map(|_| done.next().expect("one per job")).collect()).collect();
    let lower = done.next();
    let exhaustion = if sc.requests(CheckKind::Exhaustion) {
        let (h, delta) = sc.level(finest);
        let opts = RunOptions { schedule: sc.schedule, snapshots: snapshot_plan(sc, delta, None), kernel: sc.kernels[0] };
        let dx = sc.exhaustion_dx.expect("validated");
        Some(run_exhaustion(&sc.measure, &sc.radii, dx, h, delta, sc.t_end, &opts)?)
    } else {
        None
    };
    Ok(Campaign { scenario: sc.clone(), runs, lower, exhaustion, runtime_seconds: start.elapsed().as_secs_f64() })
}

/// Runs each requested check once on the campaign's trajectories.
pub fn verify(campaign: &Campaign) -> Report {
    let sc = &campaign.scenario;
    let tol = &sc.tolerances;
    let dt = sc.schedule.max_dt();
    let reference = campaign.reference();
    let start = Instant::now();
    let entries: Vec<CheckEntry> = sc
        .checks
        .iter()
        .map(|check| match check {
            CheckKind::AreaLaw => checks::check_area_law(reference, sc.t_end, dt, tol),
            CheckKind::Chen => {
                let all: Vec<&Trajectory> = campaign.labelled().into_iter().map(|p| p.1).collect();
                checks::check_chen(&all, dt, tol)
            }
            CheckKind::Ordering => {
                checks::check_ordering(reference, campaign.lower.as_ref().expect("lower flow is run"), tol)
            }
            CheckKind::MassGain => checks::check_mass_gain(reference, &sc.mass_gain, sc.t_end, tol),
            CheckKind::PlaneContraction => checks::check_plane_contraction(
                reference,
                campaign.lower.as_ref().expect("lower flow is run"),
                sc.contraction.as_ref().expect("validated"),
                sc.t_end,
                tol,
            ),
            CheckKind::Uniqueness => {
                let families: Vec<Vec<&Trajectory>> = campaign.runs.iter().map(|f| f.iter().collect()).collect();
                let probe = sc.probe.time.unwrap_or(sc.t_end);
                checks::check_uniqueness(&families, probe, sc.probe.radius, dt, tol)
            }
            CheckKind::Exhaustion => checks::check_exhaustion(campaign.exhaustion.as_ref().expect("exhaustion is run"), tol),
            CheckKind::Potential => {
                let suite =
                    if sc.test_functions.is_empty() { default_test_functions(sc.measure.surface) } else { sc.test_functions.clone() };
                checks::check_potential(reference, sc.t_end, &suite, dt, tol)
            }
            CheckKind::Deeper => checks::check_deeper(reference, &sc.epsilons, dt, tol),
        })
        .collect();
    Report {
        version: REPORT_VERSION,
        scenario: sc.name.clone(),
        entries,
        runtime_seconds: campaign.runtime_seconds + start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        trajectories: campaign.labelled().len() + campaign.exhaustion.as_ref().map_or(0, |e| e.trajectories.len()),
    }
}

/// One CSV row per snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub area: f64,
    /// Smallest relative decrease of `u/t` since the previous snapshot; negative values are violations.
    pub min_u_over_t_defect: f64,
    pub min_k_plus_half_t: f64,
    /// Newton residual of the step ending at this snapshot.
    pub residuals: f64,
}

pub fn time_series(traj: &Trajectory) -> Result<Vec<TimeSeriesRow>> {
    let chen = chen_rows(traj)?;
    Ok(traj
        .snapshots
        .iter()
        .zip(chen)
        .enumerate()
        .map(|(i, (s, c))| TimeSeriesRow {
            t: s.t,
            area: traj.area(i),
            min_u_over_t_defect: c.u_over_t_margin,
            min_k_plus_half_t: c.k_plus_half_t,
            residuals: s.diagnostics.residual,
        })
        .collect())
}

fn write_csv(rows: &[TimeSeriesRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_error)?;
    w.write_record(["t", "area", "min_u_over_t_defect", "min_K_plus_half_t", "residuals"]).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Writes snapshot dumps and a CSV time series per trajectory under `out`.
pub fn simulate(campaign: &Campaign, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (label, traj) in campaign.labelled() {
        let dir = out.join(&label);
        let index = io::write_trajectory(traj, &dir)?;
        let csv = dir.join("series.csv");
        write_csv(&time_series(traj)?, &csv)?;
        written.push(index);
        written.push(csv);
    }
    Ok(written)
}
