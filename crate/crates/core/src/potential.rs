//! Potential flows `Δφ = u`, `∂_tφ = log Δφ` built from trajectories, their
//! initial traces and the comparison barriers.
//!
//! Potentials are accumulated from the per-step integrals of `log u` stored
//! in the trajectory, so the discrete identity `Δ_h φ(t) = u(t)` holds to the
//! Newton tolerance at every snapshot.

use crate::error::{domain, Error, Result};
use crate::flow::Trajectory;
use crate::geometry::{hyperbolic_factor_unchecked, BallLayout, CartesianGrid, ChartGrid, SphereGrid, SurfaceKind};
use crate::measure::TestFunction;
use crate::poisson::{solve_ball_dirichlet, solve_sphere};
use crate::semilinear::kazdan_warner_solve;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Value standing for `−∞` in extracted initial traces.
pub const MINUS_INFINITY_FLOOR: f64 = -1e6;

/// Snapshots with time below this fraction of `τ` count as small-time data.
const SMALL_TIME_FRACTION: f64 = 0.1;

/// Potential `φ(t_k)` at the snapshots of a trajectory.
///
/// `times` is the time variable of the potential equations: the flow clock
/// on planar charts and the clock rescaled to initial area `4π` on the sphere,
/// where `u` holds the rescaled factor.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub surface: SurfaceKind,
    pub grid: ChartGrid,
    pub times: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// `φ̌(t) = ∫_τ^t min(log u, 0)`, nonincreasing in `t`.
    pub low: Vec<Vec<f64>>,
    /// `φ̂(t) = ∫_τ^t max(log u, 0)`, nondecreasing in `t`.
    pub high: Vec<Vec<f64>>,
    pub tau: f64,
    pub phi_tau: Vec<f64>,
    /// Nodes where the potential equations are checked.
    pub nodes: Vec<usize>,
    /// Area normalization `μ(S²)/4π` on the sphere, 1 on planar charts.
    pub scale: f64,
}

/// Potential of a ball-chart or sphere trajectory with reference time `tau`.
///
/// On ball charts `φ_τ` solves the Dirichlet problem with zero collar data and
/// is then made mean-zero over the active nodes. On the sphere the flow is
/// rescaled to initial area `4π` and `φ_τ` is mean-zero with
/// `Δ₀φ_τ = u(τ) − (1 − 2τ)`.
pub fn build_potential(traj: &Trajectory, tau: f64) -> Result<PotentialField> {
    let it = traj
        .index_of(tau)
        .ok_or_else(|| Error::Precondition(format!("τ = {tau} is not a snapshot time")))?;
    match &traj.grid {
        ChartGrid::Cartesian(g) => build_ball(traj, g, it),
        ChartGrid::Sphere(g) => build_sphere(traj, g, it),
        ChartGrid::LogPolar(_) => Err(Error::Unsupported(
            "potentials need a ball chart or the sphere; the cylinder chart has no Dirichlet problem".into(),
        )),
    }
}

fn build_ball(traj: &Trajectory, g: &CartesianGrid, it: usize) -> Result<PotentialField> {
    let layout = BallLayout::new(g.clone());
    let snap_tau = &traj.snapshots[it];
    let n = g.len();
    let f: Vec<f64> = (0..n).map(|k| if layout.is_active(k) { snap_tau.u[k] } else { 0.0 }).collect();
    let sol = solve_ball_dirichlet(&layout, &f, &vec![0.0; n])?;
    let nodes: Vec<usize> = layout.active_indices().collect();
    let mean = nodes.iter().map(|&k| sol.values[k]).sum::<f64>() / nodes.len() as f64;
    let defined = |k: usize| !snap_tau.log_low[k].is_nan();
    let phi_tau: Vec<f64> = (0..n).map(|k| if defined(k) { sol.values[k] - mean } else { f64::NAN }).collect();
    let mut pf = PotentialField {
        surface: traj.surface,
        grid: traj.grid.clone(),
        times: Vec::new(),
        phi: Vec::new(),
        u: Vec::new(),
        low: Vec::new(),
        high: Vec::new(),
        tau: traj.clock(it),
        phi_tau,
        nodes,
        scale: 1.0,
    };
    for (i, s) in traj.snapshots.iter().enumerate() {
        let low: Vec<f64> = (0..n).map(|k| s.log_low[k] - snap_tau.log_low[k]).collect();
        let high: Vec<f64> = (0..n).map(|k| s.log_high[k] - snap_tau.log_high[k]).collect();
        pf.phi.push((0..n).map(|k| pf.phi_tau[k] + low[k] + high[k]).collect());
        pf.times.push(traj.clock(i));
        pf.u.push(s.u.clone());
        pf.low.push(low);
        pf.high.push(high);
    }
    Ok(pf)
}

fn build_sphere(traj: &Trajectory, g: &Arc<SphereGrid>, it: usize) -> Result<PotentialField> {
    let area0 = g.integrate(&traj.snapshots[0].u);
    if !(area0 > 0.0 && area0.is_finite()) {
        return domain(format!("cannot normalize a sphere flow of initial area {area0}"));
    }
    let lambda = area0 / (4.0 * PI);
    let log_l = lambda.ln();
    let clock = |i: usize| traj.clock(i) / lambda;
    for (i, s) in traj.snapshots.iter().enumerate() {
        let mean = g.mean(&s.u) / lambda;
        let expect = 1.0 - 2.0 * clock(i);
        if (mean - expect).abs() > 1e-6 {
            return domain(format!(
                "normalized area {:.9} at t = {:.6} departs from 4π(1 − 2t); the trajectory is not a sphere flow",
                4.0 * PI * mean,
                s.t
            ));
        }
    }
    let snap_tau = &traj.snapshots[it];
    let tau = clock(it);
    let u_tau: Vec<f64> = snap_tau.u.iter().map(|v| v / lambda).collect();
    let phi_tau = solve_sphere(g, &u_tau);
    let n = g.len();
    let mut pf = PotentialField {
        surface: SurfaceKind::Sphere,
        grid: traj.grid.clone(),
        times: Vec::new(),
        phi: Vec::new(),
        u: Vec::new(),
        low: Vec::new(),
        high: Vec::new(),
        tau,
        phi_tau,
        nodes: (0..n).collect(),
        scale: lambda,
    };
    for (i, s) in traj.snapshots.iter().enumerate() {
        let dt = clock(i) - tau;
        // ∫ log(u/λ) dt̃ = (1/λ)∫ log u dt − (t̃ − τ) log λ, split by sign.
        let low: Vec<f64> =
            (0..n).map(|k| (s.log_low[k] - snap_tau.log_low[k]) / lambda - dt * log_l.max(0.0)).collect();
        let high: Vec<f64> =
            (0..n).map(|k| (s.log_high[k] - snap_tau.log_high[k]) / lambda - dt * log_l.min(0.0)).collect();
        pf.phi.push((0..n).map(|k| pf.phi_tau[k] + low[k] + high[k]).collect());
        pf.times.push(clock(i));
        pf.u.push(s.u.iter().map(|v| v / lambda).collect());
        pf.low.push(low);
        pf.high.push(high);
    }
    Ok(pf)
}

impl PotentialField {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the snapshot at potential time `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1e-9))
    }

    fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        match &self.grid {
            ChartGrid::Cartesian(g) => g.laplacian_interior(f),
            ChartGrid::Sphere(g) => g.laplacian(f),
            ChartGrid::LogPolar(g) => g.laplacian_interior(f),
        }
    }

    /// Right side of the elliptic identity: `u` on planar charts, `u − (1 − 2t)` on the sphere.
    fn elliptic_target(&self, k: usize, node: usize) -> f64 {
        match self.surface {
            SurfaceKind::Sphere => self.u[k][node] - (1.0 - 2.0 * self.times[k]),
            _ => self.u[k][node],
        }
    }

    /// `max |Δφ(t_k) − target|` over the checked nodes.
    pub fn elliptic_residual(&self, k: usize) -> f64 {
        let lap = self.laplacian(&self.phi[k]);
        self.nodes.iter().map(|&i| (lap[i] - self.elliptic_target(k, i)).abs()).fold(0.0, f64::max)
    }

    /// `max |(φ₂ − φ₁)/(t₂ − t₁) − ½(log u₁ + log u₂)|` for each consecutive
    /// pair of snapshots with `t₁ ≥ t_min`, as `(t₁, t₂, residual)`.
    pub fn evolution_residuals(&self, t_min: f64) -> Vec<(f64, f64, f64)> {
        (0..self.len().saturating_sub(1))
            .filter(|&k| self.times[k] >= t_min && self.times[k + 1] > self.times[k])
            .map(|k| {
                let (t1, t2) = (self.times[k], self.times[k + 1]);
                let r = self
                    .nodes
                    .iter()
                    .map(|&i| {
                        let d = (self.phi[k + 1][i] - self.phi[k][i]) / (t2 - t1);
                        (d - 0.5 * (self.u[k][i].ln() + self.u[k + 1][i].ln())).abs()
                    })
                    .fold(0.0, f64::max);
                (t1, t2, r)
            })
            .collect()
    }

    /// Largest violation of the monotone split: `φ̌` must not increase and `φ̂` must not decrease.
    pub fn split_monotonicity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 1..self.len() {
            for &i in &self.nodes {
                worst = worst.max(self.low[k][i] - self.low[k - 1][i]);
                worst = worst.max(self.high[k - 1][i] - self.high[k][i]);
            }
        }
        worst
    }

    /// Adds a time-independent function to every `φ(t_k)` after checking it is
    /// discretely harmonic on the checked nodes.
    pub fn regauge(&self, harmonic: &[f64]) -> Result<Self> {
        if harmonic.len() != self.phi_tau.len() {
            return Err(Error::Precondition("gauge field does not match the grid".into()));
        }
        let lap = self.laplacian(harmonic);
        let scale = self.nodes.iter().map(|&i| harmonic[i].abs()).fold(1.0, f64::max);
        let bad = self.nodes.iter().map(|&i| lap[i].abs()).fold(0.0, f64::max);
        if bad > 1e-8 * scale {
            return domain(format!("gauge field is not harmonic, |Δg| reaches {bad:.3e}"));
        }
        let mut out = self.clone();
        let add = |v: &mut Vec<f64>| v.iter_mut().zip(harmonic).for_each(|(a, b)| *a += b);
        add(&mut out.phi_tau);
        out.phi.iter_mut().for_each(add);
        Ok(out)
    }
}

/// Extracted initial trace `φ₀`.
#[derive(Debug, Clone, Serialize)]
pub struct InitialTrace {
    /// `φ₀` with `MINUS_INFINITY_FLOOR` where the trace is `−∞`.
    pub values: Vec<f64>,
    pub minus_infinity: Vec<bool>,
    /// Extrapolated `φ̌(0)` and `φ̂(0)`.
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// The two snapshot times used.
    pub t1: f64,
    pub t2: f64,
    /// Fitted exponent `b` in `log u ≈ a + b log t` per node.
    pub exponent: Vec<f64>,
}

/// Extrapolates `φ(t) → φ₀` from the two smallest positive snapshot times.
///
/// Near `t = 0` each node is fitted with `log u ≈ a + b log t`, whose integral
/// over `(0, t₁)` is `t₁(log u(t₁) − b)`. The tail is assigned to `φ̌` or `φ̂`
/// by its sign.
pub fn extract_phi0(pf: &PotentialField) -> Result<InitialTrace> {
    extract_phi0_with_floor(pf, MINUS_INFINITY_FLOOR)
}

pub fn extract_phi0_with_floor(pf: &PotentialField, floor: f64) -> Result<InitialTrace> {
    let mut small: Vec<usize> = (0..pf.len()).filter(|&k| pf.times[k] > 0.0 && pf.times[k] < pf.tau).collect();
    small.sort_by(|a, b| pf.times[*a].total_cmp(&pf.times[*b]));
    if small.len() < 2 || pf.times[small[0]] > SMALL_TIME_FRACTION * pf.tau {
        return Err(Error::Precondition(format!(
            "extracting φ₀ needs two snapshots in (0, τ) with the first below {SMALL_TIME_FRACTION}·τ = {}",
            SMALL_TIME_FRACTION * pf.tau
        )));
    }
    let (k1, k2) = (small[0], small[1]);
    let (t1, t2) = (pf.times[k1], pf.times[k2]);
    let n = pf.phi_tau.len();
    let mut tr = InitialTrace {
        values: vec![f64::NAN; n],
        minus_infinity: vec![false; n],
        low: vec![f64::NAN; n],
        high: vec![f64::NAN; n],
        t1,
        t2,
        exponent: vec![f64::NAN; n],
    };
    for i in 0..n {
        let (u1, u2) = (pf.u[k1][i], pf.u[k2][i]);
        if !(pf.phi[k1][i].is_finite() && u1 > 0.0 && u2 > 0.0) {
            continue;
        }
        let b = (u2.ln() - u1.ln()) / (t2.ln() - t1.ln());
        let tail = t1 * (u1.ln() - b);
        let (tl, th) = if tail < 0.0 { (tail, 0.0) } else { (0.0, tail) };
        tr.exponent[i] = b;
        tr.low[i] = pf.low[k1][i] - tl;
        tr.high[i] = pf.high[k1][i] - th;
        let v = pf.phi_tau[i] + tr.low[i] + tr.high[i];
        if v < floor {
            tr.values[i] = floor;
            tr.minus_infinity[i] = true;
        } else {
            tr.values[i] = v;
        }
    }
    Ok(tr)
}

/// Regauges a ball-chart potential by a discrete harmonic function so that its
/// trace vanishes on the collar; the trace is then bounded on the closed ball,
/// as for the restriction of a potential defined on a larger domain.
pub fn anchor_trace(pf: &PotentialField, phi0: &InitialTrace) -> Result<(PotentialField, InitialTrace)> {
    let ChartGrid::Cartesian(g) = &pf.grid else {
        return Err(Error::Unsupported("anchoring the trace is a ball-chart operation".into()));
    };
    if pf.nodes.iter().any(|&i| phi0.minus_infinity[i]) {
        return domain("φ₀ = −∞ at an active node; the trace cannot be anchored");
    }
    let layout = BallLayout::new(g.clone());
    let lap = g.laplacian_interior(&phi0.values);
    let n = g.len();
    let f: Vec<f64> = (0..n).map(|k| if layout.is_active(k) { lap[k] } else { 0.0 }).collect();
    let sol = solve_ball_dirichlet(&layout, &f, &vec![0.0; n])?;
    let gauge: Vec<f64> =
        (0..n).map(|k| if pf.phi_tau[k].is_nan() { 0.0 } else { sol.values[k] - phi0.values[k] }).collect();
    let out = pf.regauge(&gauge)?;
    let mut trace = phi0.clone();
    for k in 0..n {
        if !pf.phi_tau[k].is_nan() {
            trace.values[k] += gauge[k];
            trace.high[k] += gauge[k];
        }
    }
    Ok((out, trace))
}

/// `max |φ₀(x) − ⨍_{B_r(x)} φ₀|` for each radius in `radii`, over the finite
/// nodes whose largest ball stays in the chart.
pub fn mean_value_defects(pf: &PotentialField, phi0: &InitialTrace, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let finite = |i: usize| phi0.values[i].is_finite() && !phi0.minus_infinity[i];
    match &pf.grid {
        ChartGrid::Cartesian(g) => {
            let dx = g.spacing();
            let m = g.nodes_per_axis() as i64;
            let reach = g.radius() - 2.0 * dx - radii.iter().copied().fold(0.0, f64::max);
            let active: std::collections::HashSet<usize> = pf.nodes.iter().copied().collect();
            Ok(radii
                .iter()
                .map(|&r| {
                    let q = (r / dx).floor() as i64;
                    let offsets: Vec<(i64, i64)> = (-q..=q)
                        .flat_map(|a| (-q..=q).map(move |b| (a, b)))
                        .filter(|(a, b)| ((a * a + b * b) as f64).sqrt() * dx <= r + 1e-12)
                        .collect();
                    let worst = pf
                        .nodes
                        .iter()
                        .filter(|&&k| {
                            let x = g.point(k);
                            finite(k) && x[0].hypot(x[1]) <= reach
                        })
                        .filter_map(|&k| {
                            let (i, j) = ((k as i64) % m, (k as i64) / m);
                            let mut sum = 0.0;
                            for (a, b) in &offsets {
                                let kk = ((j + b) * m + i + a) as usize;
                                if !active.contains(&kk) || !finite(kk) {
                                    return None;
                                }
                                sum += phi0.values[kk];
                            }
                            Some((phi0.values[k] - sum / offsets.len() as f64).abs())
                        })
                        .fold(0.0, f64::max);
                    (r, worst)
                })
                .collect())
        }
        ChartGrid::Sphere(g) => {
            let w = g.area_weights();
            let pts: Vec<[f64; 3]> = (0..g.len()).map(|i| g.unit_vector(i)).collect();
            Ok(radii
                .iter()
                .map(|&r| {
                    let cr = r.cos();
                    let worst = (0..g.len())
                        .filter(|&i| finite(i))
                        .map(|i| {
                            let (mut s, mut a) = (0.0, 0.0);
                            for j in 0..g.len() {
                                let d = pts[i][0] * pts[j][0] + pts[i][1] * pts[j][1] + pts[i][2] * pts[j][2];
                                if d >= cr {
                                    s += w[j] * phi0.values[j];
                                    a += w[j];
                                }
                            }
                            (phi0.values[i] - s / a).abs()
                        })
                        .fold(0.0, f64::max);
                    (r, worst)
                })
                .collect())
        }
        ChartGrid::LogPolar(_) => Err(Error::Unsupported("mean values on the cylinder chart".into())),
    }
}

/// `Σ ψ Δφ₀ dA`, the weak Laplacian of the initial trace against `ψ`.
///
/// On the sphere this is `λ ∫ ψ (Δ₀φ₀ + 1) dμ_{g₀}`, the measure recovered
/// from the normalized trace.
pub fn pair_laplacian(pf: &PotentialField, phi0: &InitialTrace, psi: &TestFunction) -> Result<f64> {
    match &pf.grid {
        ChartGrid::Cartesian(g) => {
            let lap = g.laplacian_interior(&phi0.values);
            let dx2 = g.spacing().powi(2);
            let mut sum = 0.0;
            for &k in &pf.nodes {
                let v = psi.eval(g.point(k));
                if v == 0.0 {
                    continue;
                }
                if phi0.minus_infinity[k] || !lap[k].is_finite() {
                    return domain("the test function meets nodes where φ₀ = −∞");
                }
                sum += v * lap[k] * dx2;
            }
            Ok(sum)
        }
        ChartGrid::Sphere(g) => {
            if phi0.minus_infinity.iter().any(|m| *m) {
                return domain("φ₀ = −∞ somewhere; the spectral Laplacian is unavailable");
            }
            let lap = g.laplacian(&phi0.values);
            let f: Vec<f64> = (0..g.len()).map(|i| psi.eval_sphere(g.unit_vector(i)) * (lap[i] + 1.0)).collect();
            Ok(pf.scale * g.integrate(&f))
        }
        ChartGrid::LogPolar(_) => Err(Error::Unsupported("pairing on the cylinder chart".into())),
    }
}

/// `max_x (φ(x, t_k) − φ₀(x))` at each snapshot time in `(0, τ)`.
pub fn usc_defects(pf: &PotentialField, phi0: &InitialTrace) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = (0..pf.len())
        .filter(|&k| pf.times[k] > 0.0 && pf.times[k] < pf.tau)
        .map(|k| {
            let d = pf
                .nodes
                .iter()
                .filter(|&&i| !phi0.minus_infinity[i] && phi0.values[i].is_finite())
                .map(|&i| pf.phi[k][i] - phi0.values[i])
                .fold(f64::NEG_INFINITY, f64::max);
            (pf.times[k], d)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Radius, time shift and `F(δ) = δ(1 − log(8δ/R²))` of the modified potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierParams {
    pub radius: f64,
    pub delta: f64,
    pub f: f64,
}

impl BarrierParams {
    pub fn new(radius: f64, delta: f64) -> Result<Self> {
        if !(radius > 0.0 && delta > 0.0) {
            return domain(format!("barrier needs R > 0 and δ > 0, got R = {radius}, δ = {delta}"));
        }
        Ok(Self { radius, delta, f: delta * (1.0 - (8.0 * delta / (radius * radius)).ln()) })
    }

    /// `F(δ) > 0` exactly when `δ < eR²/8`.
    pub fn f_positive(&self) -> bool {
        self.f > 0.0
    }
}

/// `φ_{R,δ}(t) = φ_R(t + δ) + F(δ) + δ(1 + t)` on the snapshots with `t ≥ δ`.
pub fn modified_potential(pf: &PotentialField, delta: f64) -> Result<PotentialField> {
    let ChartGrid::Cartesian(g) = &pf.grid else {
        return Err(Error::Unsupported("the modified potential lives on a ball chart".into()));
    };
    let bp = BarrierParams::new(g.radius(), delta)?;
    let keep: Vec<usize> = (0..pf.len()).filter(|&k| pf.times[k] >= delta * (1.0 - 1e-12)).collect();
    if keep.is_empty() {
        return Err(Error::Precondition(format!("no snapshot at or after δ = {delta}")));
    }
    let shift = |t: f64| bp.f + delta * (1.0 + t);
    let mut out = pf.clone();
    out.times = keep.iter().map(|&k| (pf.times[k] - delta).max(0.0)).collect();
    out.phi = keep
        .iter()
        .zip(&out.times)
        .map(|(&k, &t)| pf.phi[k].iter().map(|v| v + shift(t)).collect())
        .collect();
    out.u = keep.iter().map(|&k| pf.u[k].clone()).collect();
    out.low = keep.iter().map(|&k| pf.low[k].clone()).collect();
    out.high = keep.iter().map(|&k| pf.high[k].clone()).collect();
    out.tau = pf.tau - delta;
    let s = shift(out.tau);
    out.phi_tau = pf.phi_tau.iter().map(|v| v + s).collect();
    Ok(out)
}

/// `min_x (φ_{R,δ}(0) − φ₀ − δ)` over finite nodes; nonnegative in theory.
pub fn initial_control_margin(modified: &PotentialField, phi0: &InitialTrace, delta: f64) -> Result<f64> {
    let k = modified
        .index_of(0.0)
        .ok_or_else(|| Error::Precondition(format!("no snapshot at t = δ = {delta}")))?;
    Ok(modified
        .nodes
        .iter()
        .filter(|&&i| !phi0.minus_infinity[i] && phi0.values[i].is_finite())
        .map(|&i| modified.phi[k][i] - phi0.values[i] - delta)
        .fold(f64::INFINITY, f64::min))
}

/// Outcome of the boundary separation check.
#[derive(Debug, Clone, Serialize)]
pub struct BarrierReport {
    /// Smallest `C₁` with `φ_{R,δ} − ψ ≥ (δ/2) log h_R − C₁` at all checked nodes and times.
    pub c1: f64,
    /// `(shell outer radius, min margin)` over ten radial shells.
    pub margin_profile: Vec<(f64, f64)>,
    /// Slope of `max_t [(δ/2) log h_R − (φ_{R,δ} − ψ)]` against `log h_R` on the outer shell.
    pub outer_slope: f64,
    /// False when that slope is positive, i.e. no finite `C₁` survives refinement.
    pub finite: bool,
    pub times_checked: usize,
}

/// Fits `C₁` in `φ_{R,δ}(t) − ψ(t) ≥ (δ/2) log h_R − C₁` for `t ≤ t1`.
pub fn check_barrier_separation(
    pf_rd: &PotentialField,
    psi: &PotentialField,
    delta: f64,
    radius: f64,
    t1: f64,
) -> Result<BarrierReport> {
    let (ChartGrid::Cartesian(g), ChartGrid::Cartesian(gp)) = (&pf_rd.grid, &psi.grid) else {
        return Err(Error::Unsupported("barrier separation is a ball-chart check".into()));
    };
    if g != gp {
        return Err(Error::Precondition("both potentials must share a grid".into()));
    }
    if !(radius > 0.0 && radius <= g.radius() * (1.0 + 1e-12)) {
        return domain(format!("R = {radius} does not fit the chart of radius {}", g.radius()));
    }
    let pairs: Vec<(usize, usize)> = (0..pf_rd.len())
        .filter(|&k| pf_rd.times[k] <= t1 * (1.0 + 1e-12))
        .filter_map(|k| psi.index_of(pf_rd.times[k]).map(|j| (k, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Precondition(format!("no common snapshot times up to t₁ = {t1}")));
    }
    let nodes: Vec<usize> =
        pf_rd.nodes.iter().copied().filter(|k| psi.nodes.binary_search(k).is_ok()).collect();
    let r2 = radius * radius;
    let log_h: Vec<(usize, f64, f64)> = nodes
        .iter()
        .filter_map(|&k| {
            let x = g.point(k);
            let q = x[0] * x[0] + x[1] * x[1];
            (q < r2).then(|| (k, q.sqrt(), hyperbolic_factor_unchecked(radius, q).ln()))
        })
        .collect();
    // d(x) = max_t [(δ/2) log h_R − (φ_{R,δ} − ψ)]
    let d: Vec<f64> = log_h
        .iter()
        .map(|&(k, _, lh)| {
            pairs
                .iter()
                .map(|&(a, b)| 0.5 * delta * lh - (pf_rd.phi[a][k] - psi.phi[b][k]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let c1 = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reach = log_h.iter().map(|e| e.1).fold(0.0, f64::max);
    let mut profile = vec![(0.0, f64::INFINITY); 10];
    for (b, p) in profile.iter_mut().enumerate() {
        p.0 = reach * (b + 1) as f64 / 10.0;
    }
    for (e, dv) in log_h.iter().zip(&d) {
        let b = ((e.1 / reach * 10.0) as usize).min(9);
        profile[b].1 = profile[b].1.min(c1 - dv);
    }
    let outer: Vec<(f64, f64)> =
        log_h.iter().zip(&d).filter(|(e, _)| e.1 >= 0.8 * reach).map(|(e, dv)| (e.2, *dv)).collect();
    let outer_slope = least_squares_slope(&outer);
    Ok(BarrierReport {
        c1,
        margin_profile: profile,
        outer_slope,
        finite: c1.is_finite() && outer_slope <= 1e-9,
        times_checked: pairs.len(),
    })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Sphere potential normalized so that `max φ₀ = −0.1`, with the rescaled
/// `ψ(t') = e^{t'} φ((1 − e^{−t'})/2)` and the checks of both equations.
#[derive(Debug, Clone)]
pub struct SpherePotential {
    pub field: PotentialField,
    pub phi0: InitialTrace,
    /// Constant added to the mean-zero gauge.
    pub shift: f64,
    /// `(t', ψ(t'))` for the snapshots with `t < 1/2`.
    pub psi: Vec<(f64, Vec<f64>)>,
    pub elliptic: Vec<f64>,
    pub evolution: Vec<(f64, f64, f64)>,
    pub psi_residuals: Vec<(f64, f64, f64)>,
    /// `φ(t) < 0` at every node of every snapshot with `t > 0`.
    pub negative: bool,
    /// `(t, ∫ e^{2|φ(t)|} dμ_{g₀})` for `0 < t ≤ τ`.
    pub integrability: Vec<(f64, f64)>,
    /// Those integrals stay finite and within ten times their value at `τ`.
    pub integrable_bounded: bool,
}

/// Builds the sphere potential with `τ = 1/4` in normalized time.
pub fn sphere_potential(traj: &Trajectory) -> Result<SpherePotential> {
    let ChartGrid::Sphere(g) = &traj.grid else {
        return Err(Error::Precondition("sphere_potential needs a sphere trajectory".into()));
    };
    let area0 = g.integrate(&traj.snapshots[0].u);
    let tau_abs = traj.meta.start_time + 0.25 * area0 / (4.0 * PI);
    let mut field = build_potential(traj, tau_abs)?;
    let mut phi0 = extract_phi0(&field)?;
    let top = phi0
        .values
        .iter()
        .zip(&phi0.minus_infinity)
        .filter(|(_, m)| !**m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = -0.1 - top;
    let add = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x += shift);
    add(&mut field.phi_tau);
    field.phi.iter_mut().for_each(add);
    for (v, m) in phi0.values.iter_mut().zip(&phi0.minus_infinity) {
        if !*m {
            *v += shift;
        }
    }
    let elliptic = (0..field.len()).map(|k| field.elliptic_residual(k)).collect();
    let evolution = field.evolution_residuals(0.0);
    let psi: Vec<(f64, Vec<f64>)> = (0..field.len())
        .filter(|&k| field.times[k] < 0.5)
        .map(|k| {
            let s = field.times[k];
            let e = 1.0 / (1.0 - 2.0 * s);
            (-(1.0 - 2.0 * s).ln(), field.phi[k].iter().map(|v| v * e).collect())
        })
        .collect();
    // ∂_tψ = ψ − t/2 + ½ log(Δ₀ψ + 1)
    let rhs = |t: f64, p: &[f64]| -> Vec<f64> {
        let lap = g.laplacian(p);
        (0..p.len()).map(|i| p[i] - 0.5 * t + 0.5 * (lap[i] + 1.0).ln()).collect()
    };
    let psi_residuals = psi
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| {
            let (a, b) = (rhs(w[0].0, &w[0].1), rhs(w[1].0, &w[1].1));
            let dt = w[1].0 - w[0].0;
            let r = (0..a.len())
                .map(|i| ((w[1].1[i] - w[0].1[i]) / dt - 0.5 * (a[i] + b[i])).abs())
                .fold(0.0, f64::max);
            (w[0].0, w[1].0, r)
        })
        .collect();
    let negative = (0..field.len())
        .filter(|&k| field.times[k] > 0.0 && field.times[k] < 0.5)
        .all(|k| field.phi[k].iter().all(|v| *v < 0.0));
    let mut integrability: Vec<(f64, f64)> = (0..field.len())
        .filter(|&k| field.times[k] > 0.0 && field.times[k] <= field.tau * (1.0 + 1e-12))
        .map(|k| {
            let e: Vec<f64> = field.phi[k].iter().map(|v| (2.0 * v.abs()).exp()).collect();
            (field.times[k], g.integrate(&e))
        })
        .collect();
    integrability.sort_by(|a, b| a.0.total_cmp(&b.0));
    let at_tau = integrability.last().map_or(f64::NAN, |p| p.1);
    let integrable_bounded =
        !integrability.is_empty() && integrability.iter().all(|p| p.1.is_finite() && p.1 <= 10.0 * at_tau);
    Ok(SpherePotential {
        field,
        phi0,
        shift,
        psi,
        elliptic,
        evolution,
        psi_residuals,
        negative,
        integrability,
        integrable_bounded,
    })
}

/// Comparison of `Φ_ε` with `φ(ε + t)` for one `ε`.
#[derive(Debug, Clone, Serialize)]
pub struct DeeperEpsilon {
    pub epsilon: f64,
    pub kw_residual: f64,
    pub kw_sandwiched: bool,
    /// `max (Φ_ε(t) − φ(ε + t))` over nodes and checked times; nonpositive in theory.
    pub max_violation: f64,
    pub times_checked: usize,
}

/// Measured `α(t)` of the lower bound `φ(t) ≥ (1 − 4t)φ(0) − α(t)`.
#[derive(Debug, Clone, Serialize)]
pub struct DeeperReport {
    pub epsilons: Vec<DeeperEpsilon>,
    /// `(t, α(t))` for snapshots in `(0, 1/4)`, increasing in `t`.
    pub alpha: Vec<(f64, f64)>,
    /// `α` does not increase as `t` decreases.
    pub alpha_monotone: bool,
}

/// Checks `Φ_ε(t) = (1 − 4t)φ(ε) + t w_ε + t log t − t ≤ φ(ε + t)` with
/// `w_ε` solving `Δ₀w = e^{w − 4φ(ε)} − 1`, and measures `α(t)`.
pub fn check_deeper_bound(sp: &SpherePotential, eps_list: &[f64]) -> Result<DeeperReport> {
    let pf = &sp.field;
    let ChartGrid::Sphere(g) = &pf.grid else {
        return Err(Error::Precondition("the deeper bound is a sphere check".into()));
    };
    let mut epsilons = Vec::new();
    for &eps in eps_list {
        let ke = pf
            .index_of(eps)
            .ok_or_else(|| Error::Precondition(format!("ε = {eps} is not a snapshot time")))?;
        let f: Vec<f64> = pf.phi[ke].iter().map(|v| 4.0 * v).collect();
        let kw = kazdan_warner_solve(g, &f)?;
        let mut worst = f64::NEG_INFINITY;
        let mut count = 0;
        for k in 0..pf.len() {
            let t = pf.times[k] - eps;
            if !(t > 0.0 && t < 0.25 - eps) {
                continue;
            }
            count += 1;
            for i in 0..g.len() {
                let big_phi = (1.0 - 4.0 * t) * pf.phi[ke][i] + t * kw.w[i] + t * t.ln() - t;
                worst = worst.max(big_phi - pf.phi[k][i]);
            }
        }
        epsilons.push(DeeperEpsilon {
            epsilon: eps,
            kw_residual: kw.residual,
            kw_sandwiched: kw.sandwiched,
            max_violation: worst,
            times_checked: count,
        });
    }
    let mut alpha: Vec<(f64, f64)> = (0..pf.len())
        .filter(|&k| pf.times[k] > 0.0 && pf.times[k] < 0.25)
        .map(|k| {
            let t = pf.times[k];
            let a = (0..g.len())
                .filter(|&i| !sp.phi0.minus_infinity[i])
                .map(|i| (1.0 - 4.0 * t) * sp.phi0.values[i] - pf.phi[k][i])
                .fold(0.0, f64::max);
            (t, a)
        })
        .collect();
    alpha.sort_by(|a, b| a.0.total_cmp(&b.0));
    let alpha_monotone = alpha.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12);
    Ok(DeeperReport { epsilons, alpha, alpha_monotone })
}
