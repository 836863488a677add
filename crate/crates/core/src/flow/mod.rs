//! Time stepping of `∂_t u = Δ log u` on ball charts, the whole plane and the sphere.

mod fv;
pub mod io;
mod sphere;

use crate::error::{domain, Error, Result};
use crate::geometry::{
    hyperbolic_factor_unchecked, BallLayout, CartesianGrid, ChartGrid, LogPolarGrid, NodeRole, SphereGrid,
    SurfaceKind,
};
use crate::linalg::{slot, StencilMatrix};
use crate::measure::{smooth_with, total_mass, MeasureSpec, Mollifier, Region};
use fv::{couple, FvSystem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Discretization request for a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartSpec {
    /// Cartesian grid on `[−R, R]²` carrying the ball `B_R`, `n` intervals per axis.
    Ball { radius: f64, n: usize },
    /// The whole plane in cylinder coordinates `s = log r ∈ [log r_min, log r_max]`.
    LogPolar { r_min: f64, r_max: f64, n_theta: usize },
    /// Round sphere at spectral degree `L`.
    Sphere { degree: usize },
}

impl ChartSpec {
    pub fn build(&self) -> Result<ChartGrid> {
        Ok(match *self {
            ChartSpec::Ball { radius, n } => ChartGrid::Cartesian(CartesianGrid::new(radius, n)?),
            ChartSpec::LogPolar { r_min, r_max, n_theta } => {
                ChartGrid::LogPolar(LogPolarGrid::isotropic(r_min, r_max, n_theta, 64)?)
            }
            ChartSpec::Sphere { degree } => {
                if degree < 2 {
                    return domain(format!("sphere degree must be ≥ 2, got {degree}"));
                }
                ChartGrid::from(SphereGrid::new(degree))
            }
        })
    }

    fn admits(&self, surface: SurfaceKind) -> bool {
        match (self, surface) {
            (ChartSpec::Ball { radius, .. }, SurfaceKind::Disc) => (*radius - 1.0).abs() < 1e-12,
            (ChartSpec::Ball { .. } | ChartSpec::LogPolar { .. }, SurfaceKind::Plane) => true,
            (ChartSpec::Sphere { .. }, SurfaceKind::Sphere) => true,
            _ => false,
        }
    }
}

/// Maximal existence time: `∞` on the disc, `μ(ℝ²)/4π` on the plane, `μ(S²)/8π` on the sphere.
pub fn maximal_time(mu: &MeasureSpec, surface: SurfaceKind) -> f64 {
    match surface {
        SurfaceKind::Disc => f64::INFINITY,
        SurfaceKind::Plane => total_mass(mu, Region::Whole) / (4.0 * PI),
        SurfaceKind::Sphere => total_mass(mu, Region::Whole) / (8.0 * PI),
    }
}

/// Newton statistics of the step that produced a state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub newton_iterations: usize,
    pub residual: f64,
    /// Number of accepted substeps, larger than one after step halving.
    pub substeps: usize,
}

/// State of a flow at one time.
///
/// Values are NaN at Cartesian nodes outside the active set and its collar.
/// `log_low`/`log_high` accumulate `∫ χ_{u≤1} log u` and `∫ χ_{u>1} log u`
/// from the start with the right-endpoint rule of the implicit scheme.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub surface: SurfaceKind,
    pub grid: ChartGrid,
    pub u: Vec<f64>,
    pub t: f64,
    /// Time at which the flow started from smooth data; completeness is measured from it.
    pub t_start: f64,
    pub log_low: Vec<f64>,
    pub log_high: Vec<f64>,
    pub diagnostics: StepDiagnostics,
}

enum StepperKind {
    Ball { layout: BallLayout, sys: FvSystem },
    LogPolar { sys: FvSystem },
    Sphere(Arc<SphereGrid>),
}

/// Prebuilt implicit stepper for one chart.
pub struct Stepper {
    surface: SurfaceKind,
    grid: ChartGrid,
    kind: StepperKind,
}

fn ball_system(layout: &BallLayout) -> FvSystem {
    let grid = layout.grid();
    let m = grid.nodes_per_axis();
    let roles = layout.roles();
    let n = grid.len();
    let mut conduct = StencilMatrix::zeros(grid.shape());
    let mut dirichlet = Vec::new();
    let active: Vec<bool> = roles.iter().map(|r| *r == NodeRole::Active).collect();
    for k in 0..n {
        if !active[k] {
            conduct.set_identity_row(k);
            continue;
        }
        for (di, dj, nb) in [(-1, 0, k - 1), (1, 0, k + 1), (0, -1, k - m), (0, 1, k + m)] {
            match roles[nb] {
                NodeRole::Active => couple(&mut conduct, k, di, dj, 1.0),
                _ => {
                    conduct.row_mut(k)[slot(0, 0)] += 1.0;
                    dirichlet.push((k, nb, 1.0));
                }
            }
        }
    }
    let dx2 = grid.spacing().powi(2);
    let volume = active.iter().map(|a| if *a { dx2 } else { 0.0 }).collect();
    FvSystem { active, volume, conduct, dirichlet, source: vec![0.0; n] }
}

fn log_polar_system(g: &LogPolarGrid) -> FvSystem {
    let n = g.len();
    let (ds, dth) = (g.ds(), g.dtheta());
    let mut conduct = StencilMatrix::zeros(g.shape());
    let mut source = vec![0.0; n];
    for idx in 0..n {
        let (j, _) = g.coords(idx);
        let width = if j == 0 || j == g.n_s() { 0.5 * ds } else { ds };
        if j > 0 {
            couple(&mut conduct, idx, -1, 0, dth / ds);
        }
        if j < g.n_s() {
            couple(&mut conduct, idx, 1, 0, dth / ds);
        }
        couple(&mut conduct, idx, 0, -1, width / dth);
        couple(&mut conduct, idx, 0, 1, width / dth);
        if j == 0 {
            // ∂_s log v = 2 at the inner circle: u is smooth at the origin.
            source[idx] = -2.0 * dth;
        }
    }
    FvSystem { active: vec![true; n], volume: g.volumes(), conduct, dirichlet: Vec::new(), source }
}

impl Stepper {
    pub fn new(surface: SurfaceKind, grid: &ChartGrid) -> Result<Self> {
        let kind = match (grid, surface) {
            (ChartGrid::Cartesian(g), SurfaceKind::Disc | SurfaceKind::Plane) => {
                let layout = BallLayout::new(g.clone());
                let sys = ball_system(&layout);
                StepperKind::Ball { layout, sys }
            }
            (ChartGrid::LogPolar(g), SurfaceKind::Plane) => StepperKind::LogPolar { sys: log_polar_system(g) },
            (ChartGrid::Sphere(g), SurfaceKind::Sphere) => StepperKind::Sphere(g.clone()),
            _ => return Err(Error::Precondition(format!("chart does not discretize the {surface}"))),
        };
        Ok(Self { surface, grid: grid.clone(), kind })
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    /// Ball layout of a Cartesian chart.
    pub fn layout(&self) -> Option<&BallLayout> {
        match &self.kind {
            StepperKind::Ball { layout, .. } => Some(layout),
            _ => None,
        }
    }

    /// State at time `t0` from smooth initial data sampled on the chart.
    pub fn initial_state(&self, mut u0: Vec<f64>, t0: f64) -> Result<FlowState> {
        if u0.len() != self.grid.len() {
            return Err(Error::Precondition(format!(
                "initial field has {} values, chart has {}",
                u0.len(),
                self.grid.len()
            )));
        }
        if let StepperKind::Ball { layout, .. } = &self.kind {
            for (k, r) in layout.roles().iter().enumerate() {
                if *r == NodeRole::Outside {
                    u0[k] = f64::NAN;
                }
            }
        }
        if let Some(k) = u0.iter().position(|v| !v.is_nan() && !(*v > 0.0 && v.is_finite())) {
            return domain(format!("initial data must be positive, node {k} has {}", u0[k]));
        }
        let zeros: Vec<f64> = u0.iter().map(|v| if v.is_nan() { f64::NAN } else { 0.0 }).collect();
        Ok(FlowState {
            surface: self.surface,
            grid: self.grid.clone(),
            u: u0,
            t: t0,
            t_start: t0,
            log_low: zeros.clone(),
            log_high: zeros,
            diagnostics: StepDiagnostics::default(),
        })
    }

    /// One backward-Euler step of size `dt`.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return domain(format!("time step must be positive, got {dt}"));
        }
        let t_new = state.t + dt;
        let (w, outcome_iters, residual) = match &self.kind {
            StepperKind::Ball { layout, sys } => {
                let grid = layout.grid();
                let clock = t_new - state.t_start;
                let r2 = grid.radius().powi(2);
                let mut wb = vec![0.0; grid.len()];
                for (k, role) in layout.roles().iter().enumerate() {
                    if *role == NodeRole::Collar {
                        let x = grid.point(k);
                        wb[k] = (2.0 * clock * hyperbolic_factor_unchecked(grid.radius(), x[0] * x[0] + x[1] * x[1]))
                            .ln();
                    }
                }
                debug_assert!(r2 > 0.0);
                let w0: Vec<f64> = state.u.iter().map(|u| u.ln()).collect();
                let out = sys.step(&state.u, &w0, &wb, dt)?;
                let mut w = out.w;
                for (k, role) in layout.roles().iter().enumerate() {
                    w[k] = match role {
                        NodeRole::Active => w[k],
                        NodeRole::Collar => wb[k],
                        NodeRole::Outside => f64::NAN,
                    };
                }
                (w, out.iterations, out.residual)
            }
            StepperKind::LogPolar { sys } => {
                let w0: Vec<f64> = state.u.iter().map(|u| u.ln()).collect();
                let out = sys.step(&state.u, &w0, &[], dt)?;
                (out.w, out.iterations, out.residual)
            }
            StepperKind::Sphere(g) => {
                let min = state.u.iter().copied().fold(f64::INFINITY, f64::min);
                if min < 4.0 * dt {
                    let area = g.integrate(&state.u);
                    return Err(Error::Extinction {
                        time: state.t + area / (8.0 * PI),
                        detail: format!("min u = {min:.3e} < 4·dt at t = {:.6}", state.t),
                    });
                }
                let out = sphere::implicit_step(g, &state.u, dt)?;
                (out.w, out.iterations, out.residual)
            }
        };
        let u: Vec<f64> = w.iter().map(|v| v.exp()).collect();
        let log_low = state.log_low.iter().zip(&w).map(|(a, v)| a + dt * v.min(0.0)).collect();
        let log_high = state.log_high.iter().zip(&w).map(|(a, v)| a + dt * v.max(0.0)).collect();
        Ok(FlowState {
            surface: self.surface,
            grid: self.grid.clone(),
            u,
            t: t_new,
            t_start: state.t_start,
            log_low,
            log_high,
            diagnostics: StepDiagnostics { newton_iterations: outcome_iters, residual, substeps: 1 },
        })
    }

    /// Advances to `state.t + dt`, halving the step on Newton failure.
    pub fn advance(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        self.advance_depth(state, dt, 0)
    }

    fn advance_depth(&self, state: &FlowState, dt: f64, depth: usize) -> Result<FlowState> {
        match self.step(state, dt) {
            Ok(s) => Ok(s),
            Err(Error::Convergence(msg)) if depth < 12 => {
                let mid = self.advance_depth(state, 0.5 * dt, depth + 1).map_err(|e| annotate(e, &msg))?;
                let mut end = self.advance_depth(&mid, 0.5 * dt, depth + 1)?;
                end.diagnostics.substeps += mid.diagnostics.substeps;
                end.diagnostics.newton_iterations += mid.diagnostics.newton_iterations;
                end.diagnostics.residual = end.diagnostics.residual.max(mid.diagnostics.residual);
                Ok(end)
            }
            Err(e) => Err(e),
        }
    }
}

fn annotate(e: Error, first: &str) -> Error {
    match e {
        Error::Convergence(m) => Error::Convergence(format!("{m} (after halving; first failure: {first})")),
        other => other,
    }
}

/// Backward-Euler step on a disc (or plane ball) chart with the complete boundary collar.
pub fn step_disc(state: &FlowState, dt: f64) -> Result<FlowState> {
    if !matches!(state.grid, ChartGrid::Cartesian(_)) {
        return Err(Error::Precondition("step_disc needs a Cartesian ball chart".into()));
    }
    Stepper::new(state.surface, &state.grid)?.step(state, dt)
}

/// Backward-Euler step on the sphere.
pub fn step_sphere(state: &FlowState, dt: f64) -> Result<FlowState> {
    if !matches!(state.grid, ChartGrid::Sphere(_)) {
        return Err(Error::Precondition("step_sphere needs a sphere grid".into()));
    }
    Stepper::new(SurfaceKind::Sphere, &state.grid)?.step(state, dt)
}

/// Step-size rule, indexed by the step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DtSchedule {
    Uniform { dt: f64 },
    /// `dt_k = min(dt0·growth^k, dt_max)`.
    Geometric { dt0: f64, growth: f64, dt_max: f64 },
}

impl DtSchedule {
    pub fn nominal(&self, k: usize) -> f64 {
        match *self {
            DtSchedule::Uniform { dt } => dt,
            DtSchedule::Geometric { dt0, growth, dt_max } => (dt0 * growth.powi(k.min(4000) as i32)).min(dt_max),
        }
    }

    pub fn max_dt(&self) -> f64 {
        match *self {
            DtSchedule::Uniform { dt } => dt,
            DtSchedule::Geometric { dt_max, .. } => dt_max,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DtSchedule::Uniform { dt } => dt > 0.0,
            DtSchedule::Geometric { dt0, growth, dt_max } => dt0 > 0.0 && growth >= 1.0 && dt_max >= dt0,
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid time-step schedule {self:?}"))
        }
    }
}

/// Stored state at a snapshot time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub log_low: Vec<f64>,
    pub log_high: Vec<f64>,
    pub diagnostics: StepDiagnostics,
}

/// Provenance of a trajectory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub measure: Option<MeasureSpec>,
    pub h: Option<f64>,
    pub kernel: Option<Mollifier>,
    pub chart: Option<ChartSpec>,
    pub start_time: f64,
    /// Estimated extinction time when the run stopped early.
    pub extinction_time: Option<f64>,
    pub truncated: bool,
    pub steps: usize,
    /// Largest Newton residual over all steps.
    pub max_residual: f64,
}

/// Time-ordered snapshots of one flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub surface: SurfaceKind,
    pub grid: ChartGrid,
    pub snapshots: Vec<Snapshot>,
    pub meta: TrajectoryMeta,
}

impl Snapshot {
    fn of(state: &FlowState) -> Self {
        Self {
            t: state.t,
            u: state.u.clone(),
            log_low: state.log_low.clone(),
            log_high: state.log_high.clone(),
            diagnostics: state.diagnostics,
        }
    }
}

/// Options shared by the runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub schedule: DtSchedule,
    /// Times at which snapshots are stored, in addition to the start and end.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub kernel: Mollifier,
}

/// Evolves `state` to `t_end`, storing snapshots at the requested times.
/// Extinction on the sphere ends the run early with a flagged trajectory.
pub fn evolve(stepper: &Stepper, state: FlowState, opts: &RunOptions, t_end: f64) -> Result<Trajectory> {
    opts.schedule.validate()?;
    if !(t_end > state.t) {
        return domain(format!("end time {t_end} must exceed the start time {}", state.t));
    }
    let eps = 1e-12 * t_end.abs().max(1.0);
    let mut targets: Vec<f64> = opts.snapshots.iter().copied().filter(|s| *s > state.t + eps && *s < t_end - eps).collect();
    targets.push(t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup_by(|a, b| (*a - *b).abs() <= eps);
    let mut meta = TrajectoryMeta { start_time: state.t_start, ..Default::default() };
    let mut snaps = vec![Snapshot::of(&state)];
    let mut cur = state;
    let mut k = 0usize;
    for target in targets {
        while cur.t < target - eps {
            let dt = opts.schedule.nominal(k).min(target - cur.t);
            // Avoid a sliver step right before the target.
            let dt = if target - cur.t - dt < 1e-3 * dt { target - cur.t } else { dt };
            match stepper.advance(&cur, dt) {
                Ok(next) => {
                    meta.max_residual = meta.max_residual.max(next.diagnostics.residual);
                    cur = next;
                    k += 1;
                }
                Err(Error::Extinction { time, .. }) => {
                    meta.extinction_time = Some(time);
                    meta.truncated = true;
                    meta.steps = k;
                    if snaps.last().map_or(true, |s| s.t < cur.t) {
                        snaps.push(Snapshot::of(&cur));
                    }
                    return Ok(Trajectory { surface: cur.surface, grid: cur.grid.clone(), snapshots: snaps, meta });
                }
                Err(e) => return Err(e),
            }
        }
        cur.t = target;
        snaps.push(Snapshot::of(&cur));
    }
    meta.steps = k;
    Ok(Trajectory { surface: cur.surface, grid: cur.grid.clone(), snapshots: snaps, meta })
}

/// Stepper and initial state for the flow from the smoothing `g_h(μ)` placed at time `δ`.
pub fn initial_state_from_measure(
    mu: &MeasureSpec,
    chart: &ChartSpec,
    h: f64,
    delta: f64,
    kernel: Mollifier,
) -> Result<(Stepper, FlowState)> {
    mu.validate()?;
    if !chart.admits(mu.surface) {
        return Err(Error::Precondition(format!("chart {chart:?} does not fit a {} measure", mu.surface)));
    }
    if !(delta >= 0.0) {
        return domain(format!("start time must be nonnegative, got {delta}"));
    }
    let grid = chart.build()?;
    let smoothed = smooth_with(mu, h, kernel)?;
    let mut u0 = smoothed.sample(&grid)?.into_values();
    if let ChartGrid::Sphere(g) = &grid {
        u0 = g.project(&u0);
        if let Some(v) = u0.iter().find(|v| !(**v > 0.0)) {
            return domain(format!("band-limited initial data is not positive ({v}); raise the degree or h"));
        }
    }
    let sampled = match &grid {
        ChartGrid::Sphere(g) => Some(g.integrate(&u0)),
        ChartGrid::LogPolar(g) => Some(log_polar_ball_volume(g, &u0, f64::INFINITY)),
        ChartGrid::Cartesian(_) => None,
    };
    if let Some(area) = sampled {
        let expected = smoothed.total_volume();
        if (area - expected).abs() > SAMPLING_REL_TOL * expected {
            return domain(format!(
                "the grid carries area {area:.6} of the smoothed total {expected:.6}; refine the chart or raise h"
            ));
        }
    }
    let stepper = Stepper::new(mu.surface, &grid)?;
    let state = stepper.initial_state(u0, delta)?;
    Ok((stepper, state))
}

/// Largest relative area the sampled initial data may miss on whole-surface charts.
const SAMPLING_REL_TOL: f64 = 0.02;

fn finite_time_guard(mu: &MeasureSpec) -> Result<f64> {
    let big_t = maximal_time(mu, mu.surface);
    if big_t == 0.0 {
        return domain("T = 0, no flow exists from the trivial measure");
    }
    Ok(big_t)
}

/// Flow from the smoothing `g_h(μ)` placed at time `δ`, evolved to `t_end`.
pub fn run_from_measure(
    mu: &MeasureSpec,
    chart: &ChartSpec,
    h: f64,
    delta: f64,
    t_end: f64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    if matches!(chart, ChartSpec::LogPolar { .. } | ChartSpec::Sphere { .. }) {
        let big_t = finite_time_guard(mu)?;
        if !(t_end < big_t) {
            return Err(Error::Precondition(format!("t_end = {t_end} is not below the maximal time T = {big_t}")));
        }
    }
    let (stepper, state) = initial_state_from_measure(mu, chart, h, delta, opts.kernel)?;
    let mut traj = evolve(&stepper, state, opts, t_end)?;
    tag(&mut traj, mu, chart, h, opts.kernel);
    Ok(traj)
}

fn tag(traj: &mut Trajectory, mu: &MeasureSpec, chart: &ChartSpec, h: f64, kernel: Mollifier) {
    traj.meta.measure = Some(mu.clone());
    traj.meta.h = Some(h);
    traj.meta.kernel = Some(kernel);
    traj.meta.chart = Some(chart.clone());
}

/// Ball-chart flows for increasing radii and their comparison on the smallest ball.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    pub radii: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// Largest `u_{R_{i+1}} − u_{R_i}` (relative) over shared active nodes and snapshots.
    pub max_violation: f64,
    /// Count of shared node values where that relative excess is above `1e−9`.
    pub violations: usize,
    /// `sup_{B_{R₁}} |u_{R_{i+1}} − u_{R_i}|` at the last snapshot, consecutive pairs.
    pub gaps: Vec<f64>,
    /// Limit estimate on the smallest chart: the largest-R field, and its distance to the previous one.
    pub limit: Vec<f64>,
    pub limit_spread: Vec<f64>,
}

/// Runs `run_from_measure` on balls `B_R` with common spacing `dx` and checks
/// that the flows decrease in `R` on shared nodes.
pub fn run_exhaustion(
    mu: &MeasureSpec,
    radii: &[f64],
    dx: f64,
    h: f64,
    delta: f64,
    t_end: f64,
    opts: &RunOptions,
) -> Result<Exhaustion> {
    if radii.len() < 2 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("exhaustion needs at least two strictly increasing radii".into()));
    }
    if mu.surface != SurfaceKind::Plane {
        return Err(Error::Precondition("exhaustion by balls is a plane construction".into()));
    }
    let specs: Vec<ChartSpec> = radii
        .iter()
        .map(|r| {
            let n = (2.0 * r / dx).round() as usize;
            if ((2.0 * r / n as f64) - dx).abs() > 1e-9 * dx {
                return Err(Error::Precondition(format!("radius {r} is not a multiple of dx/2 = {}", dx / 2.0)));
            }
            Ok(ChartSpec::Ball { radius: *r, n })
        })
        .collect::<Result<_>>()?;
    let trajectories: Vec<Trajectory> = specs
        .par_iter()
        .map(|c| run_from_measure(mu, c, h, delta, t_end, opts))
        .collect::<Result<_>>()?;
    let grids: Vec<CartesianGrid> = trajectories
        .iter()
        .map(|t| match &t.grid {
            ChartGrid::Cartesian(g) => g.clone(),
            _ => unreachable!("ball charts are Cartesian"),
        })
        .collect();
    let layouts: Vec<BallLayout> = grids.iter().map(|g| BallLayout::new(g.clone())).collect();
    let (mut max_violation, mut violations) = (f64::NEG_INFINITY, 0usize);
    let mut gaps = Vec::new();
    for p in 0..trajectories.len() - 1 {
        let (a, b) = (&trajectories[p], &trajectories[p + 1]);
        let nsnap = a.snapshots.len().min(b.snapshots.len());
        let mut gap = 0.0f64;
        for s in 0..nsnap {
            for k in layouts[0].active_indices() {
                let ka = grids[p].matching_node(&grids[0], k).expect("smaller ball nests");
                let kb = grids[p + 1].matching_node(&grids[0], k).expect("smaller ball nests");
                let (ua, ub) = (a.snapshots[s].u[ka], b.snapshots[s].u[kb]);
                let rel = (ub - ua) / ua;
                max_violation = max_violation.max(rel);
                if rel > 1e-9 {
                    violations += 1;
                }
                if s == nsnap - 1 {
                    gap = gap.max((ua - ub).abs());
                }
            }
        }
        gaps.push(gap);
    }
    let last = trajectories.len() - 1;
    let (mut limit, mut limit_spread) = (Vec::new(), Vec::new());
    for k in layouts[0].active_indices() {
        let kl = grids[last].matching_node(&grids[0], k).expect("nested");
        let kp = grids[last - 1].matching_node(&grids[0], k).expect("nested");
        let ul = trajectories[last].snapshots.last().expect("nonempty").u[kl];
        let up = trajectories[last - 1].snapshots.last().expect("nonempty").u[kp];
        limit.push(ul);
        limit_spread.push((up - ul).abs());
    }
    Ok(Exhaustion { radii: radii.to_vec(), trajectories, max_violation, violations, gaps, limit, limit_spread })
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Time since the flow started from smooth data.
    pub fn clock(&self, i: usize) -> f64 {
        self.snapshots[i].t - self.meta.start_time
    }

    /// Index of the snapshot at time `t` (within a relative `1e−9`).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.snapshots.iter().position(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1e-12))
    }

    /// Nodes where the discrete Laplacian is available and the field is an unknown.
    pub fn interior_nodes(&self) -> Vec<usize> {
        match &self.grid {
            ChartGrid::Cartesian(g) => BallLayout::new(g.clone()).active_indices().collect(),
            ChartGrid::LogPolar(g) => (0..g.len()).filter(|&i| {
                let j = g.coords(i).0;
                j > 0 && j < g.n_s()
            }).collect(),
            ChartGrid::Sphere(g) => (0..g.len()).collect(),
        }
    }

    /// Total area carried by the chart: active nodes of a ball, the whole
    /// cylinder plus the excised disc, or the sphere.
    pub fn area(&self, i: usize) -> f64 {
        let u = &self.snapshots[i].u;
        match &self.grid {
            ChartGrid::Cartesian(g) => {
                let dx2 = g.spacing().powi(2);
                BallLayout::new(g.clone()).active_indices().map(|k| u[k]).sum::<f64>() * dx2
            }
            ChartGrid::LogPolar(g) => log_polar_ball_volume(g, u, f64::INFINITY),
            ChartGrid::Sphere(g) => g.integrate(u),
        }
    }

    /// Volume of `B_r(0)` in the flow metric (planar charts).
    pub fn ball_volume(&self, i: usize, r: f64) -> Result<f64> {
        let u = &self.snapshots[i].u;
        match &self.grid {
            ChartGrid::Cartesian(g) => {
                let lay = BallLayout::new(g.clone());
                let dx = g.spacing();
                if r > g.radius() - 2.0 * dx {
                    return domain(format!("ball of radius {r} leaves the active chart"));
                }
                Ok(lay
                    .active_indices()
                    .map(|k| {
                        let x = g.point(k);
                        let d = x[0].hypot(x[1]);
                        let frac = ((r - d) / dx + 0.5).clamp(0.0, 1.0);
                        frac * u[k]
                    })
                    .sum::<f64>()
                    * dx
                    * dx)
            }
            ChartGrid::LogPolar(g) => Ok(log_polar_ball_volume(g, u, r)),
            ChartGrid::Sphere(_) => Err(Error::Unsupported("ball volumes are planar".into())),
        }
    }
}

/// `∫_{B_r} u dx` from the cylinder field `v = u r²`, linear in `s` between nodes.
fn log_polar_ball_volume(g: &LogPolarGrid, v: &[f64], r: f64) -> f64 {
    let dth = g.dtheta();
    let ring: Vec<f64> = (0..=g.n_s()).map(|j| (0..g.n_theta()).map(|k| v[g.index(j, k)]).sum::<f64>() * dth).collect();
    // Excised disc |x| < r_min, where v ≈ u(0)·r².
    let mut total = 0.5 * ring[0];
    let s_cut = r.ln();
    let ds = g.ds();
    for j in 0..g.n_s() {
        let (s0, s1) = (g.s(j), g.s(j + 1));
        if s_cut >= s1 {
            total += 0.5 * ds * (ring[j] + ring[j + 1]);
        } else if s_cut > s0 {
            let a = (s_cut - s0) / ds;
            let end = ring[j] + a * (ring[j + 1] - ring[j]);
            total += 0.5 * a * ds * (ring[j] + end);
            break;
        } else {
            break;
        }
    }
    total
}

#[cfg(test)]
mod tests;
