//! The sphere equation `Δ₀w = e^{w−f} − 1` for `f ≤ 0`: explicit upper and
//! lower solutions, monotone iteration and a Newton finish.

use crate::error::{Error, Result};
use crate::geometry::SphereGrid;
use crate::linalg;
use crate::poisson::solve_sphere;
use serde::Serialize;
use std::f64::consts::PI;

/// Upper and lower solutions of `Δ₀u + 1 − e^{u−f} = 0` with their constants.
#[derive(Debug, Clone, Serialize)]
pub struct SubSuperPair {
    pub upper: Vec<f64>,
    /// The unshifted lower solution `w − λ`.
    pub lower_raw: Vec<f64>,
    /// `lower_raw − 2C`, which lies below `upper`.
    pub lower: Vec<f64>,
    /// `(−h̄)^{−1}` with `h = −e^{−f}`.
    pub alpha: f64,
    /// `‖w‖_{C⁰} − log α`.
    pub lambda: f64,
    /// `max(‖u₊‖_{C⁰}, ‖u₋‖_{C⁰})` as measured.
    pub c_measured: f64,
    /// Bound computed from `‖e^{−f}‖_{L²}` alone; used for the shift.
    pub c_bound: f64,
    pub norm_l2: f64,
    /// `max (Δ₀u₊ + 1 + h e^{u₊})`, nonpositive up to aliasing.
    pub upper_defect: f64,
    /// `min (Δ₀u₋ + 1 + h e^{u₋})` for the shifted `u₋`, nonnegative up to aliasing.
    pub lower_defect: f64,
}

impl SubSuperPair {
    pub fn is_ordered(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(a, b)| a <= b)
    }
}

/// `sup_x |G g(x)| / ‖g‖_{L²}` for the mean-zero Green operator at degree `L`:
/// `(Σ_{l=1}^{L} (2l+1) / (4π l²(l+1)²))^{1/2}`.
pub fn green_sup_constant(degree: usize) -> f64 {
    (1..=degree)
        .map(|l| {
            let l = l as f64;
            (2.0 * l + 1.0) / (4.0 * PI * (l * (l + 1.0)).powi(2))
        })
        .sum::<f64>()
        .sqrt()
}

fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check_f(grid: &SphereGrid, f: &[f64]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::Precondition(format!("f has {} values, grid has {}", f.len(), grid.len())));
    }
    if let Some(k) = f.iter().position(|v| !(*v <= 0.0)) {
        return Err(Error::Precondition(format!("f must be ≤ 0, node {k} has {}", f[k])));
    }
    Ok(())
}

/// `Δ₀u + 1 + h e^u` at every node.
fn defect(grid: &SphereGrid, u: &[f64], h: &[f64]) -> Vec<f64> {
    let lap = grid.laplacian(u);
    (0..u.len()).map(|i| lap[i] + 1.0 + h[i] * u[i].exp()).collect()
}

/// Upper and lower solutions for `f ≤ 0`.
pub fn build_sub_super(grid: &SphereGrid, f: &[f64]) -> Result<SubSuperPair> {
    check_f(grid, f)?;
    let h: Vec<f64> = f.iter().map(|v| -(-v).exp()).collect();
    let hbar = grid.mean(&h);
    let rhs: Vec<f64> = h.iter().map(|v| hbar - v).collect();
    let v = solve_sphere(grid, &rhs);
    let vn = sup_norm(&v);
    let upper: Vec<f64> = v.iter().map(|x| x + vn).collect();

    let alpha = 1.0 / (-hbar);
    let rhs: Vec<f64> = h.iter().map(|v| -alpha * v - 1.0).collect();
    let w = solve_sphere(grid, &rhs);
    let lambda = sup_norm(&w) - alpha.ln();
    let lower_raw: Vec<f64> = w.iter().map(|x| x - lambda).collect();

    let h2: Vec<f64> = h.iter().map(|v| v * v).collect();
    let norm_l2 = grid.integrate(&h2).sqrt();
    let k = green_sup_constant(grid.degree());
    // |h| ≥ 1 makes the logarithm nonnegative.
    let c_bound = 2.0 * k * norm_l2 + (norm_l2 / (4.0 * PI).sqrt()).ln();
    let c_measured = sup_norm(&upper).max(sup_norm(&lower_raw));
    let lower: Vec<f64> = lower_raw.iter().map(|x| x - 2.0 * c_bound).collect();
    let upper_defect = defect(grid, &upper, &h).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let lower_defect = defect(grid, &lower, &h).into_iter().fold(f64::INFINITY, f64::min);
    Ok(SubSuperPair {
        upper,
        lower_raw,
        lower,
        alpha,
        lambda,
        c_measured,
        c_bound,
        norm_l2,
        upper_defect,
        lower_defect,
    })
}

/// Solution of `Δ₀w = e^{w−f} − 1` with its certificates.
#[derive(Debug, Clone, Serialize)]
pub struct KwSolution {
    pub w: Vec<f64>,
    /// `‖Δ₀w − e^{w−f} + 1‖_∞`.
    pub residual: f64,
    pub pair: SubSuperPair,
    pub picard_iterations: usize,
    pub newton_iterations: usize,
    /// Every Picard iterate lay below the previous one, up to `1e−10`.
    pub monotone: bool,
    /// `u₋ ≤ w ≤ u₊` at every node.
    pub sandwiched: bool,
    pub residual_history: Vec<f64>,
}

const KW_TOL: f64 = 1e-10;
const PICARD_SWITCH: f64 = 1e-3;
const PICARD_MAX: usize = 500;
const NEWTON_MAX: usize = 60;

fn kw_residual(grid: &SphereGrid, w: &[f64], f: &[f64]) -> (f64, Vec<f64>) {
    let lap = grid.laplacian(w);
    let r: Vec<f64> = (0..w.len()).map(|i| lap[i] - (w[i] - f[i]).exp() + 1.0).collect();
    (sup_norm(&r), r)
}

/// Monotone iteration from the upper solution, then damped Newton to `1e−10`.
pub fn kazdan_warner_solve(grid: &SphereGrid, f: &[f64]) -> Result<KwSolution> {
    let pair = build_sub_super(grid, f)?;
    let n = f.len();
    let k_shift = (0..n).map(|i| (pair.upper[i] - f[i]).exp()).fold(0.0, f64::max);
    let mut w = pair.upper.clone();
    let mut history = Vec::new();
    let mut monotone = true;
    let mut picard = 0;
    loop {
        let (res, _) = kw_residual(grid, &w, f);
        history.push(res);
        if !res.is_finite() {
            return Err(Error::Convergence(format!("monotone iteration diverged; history {history:?}")));
        }
        if res <= PICARD_SWITCH || picard == PICARD_MAX {
            break;
        }
        if picard >= 20 && res > 0.999 * history[history.len() - 21] {
            break;
        }
        // (Δ₀ − K) w_next = e^{w−f} − 1 − K w
        let rhs: Vec<f64> = (0..n).map(|i| (w[i] - f[i]).exp() - 1.0 - k_shift * w[i]).collect();
        let mut c = grid.analyze(&rhs);
        let band = grid.synthesize(&c);
        c.scale_by_degree(|l| -1.0 / ((l * (l + 1)) as f64 + k_shift));
        let s = grid.synthesize(&c);
        let next: Vec<f64> = (0..n).map(|i| s[i] - (rhs[i] - band[i]) / k_shift).collect();
        monotone &= next.iter().zip(&w).all(|(a, b)| *a <= b + 1e-10 * b.abs().max(1.0));
        w = next;
        picard += 1;
    }

    if *history.last().expect("one residual per sweep") > PICARD_SWITCH {
        // The iterate is still an upper bound; `f` is where `e^{w−f} = 1`.
        for i in 0..n {
            w[i] = f[i].clamp(pair.lower[i], w[i]);
        }
    }
    let weights = grid.area_weights();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(&weights).map(|((x, y), q)| x * y * q).sum() };
    let l2 = |r: &[f64]| dot(r, r).sqrt();
    let mut newton = 0;
    loop {
        let (res, r) = kw_residual(grid, &w, f);
        if newton > 0 {
            history.push(res);
        }
        if res <= KW_TOL {
            break;
        }
        if newton == NEWTON_MAX || !res.is_finite() {
            return Err(Error::Convergence(format!("Newton stalled; residual history {history:?}")));
        }
        // (−Δ₀ + E) δ = r
        let e: Vec<f64> = (0..n).map(|i| (w[i] - f[i]).exp()).collect();
        let mean = grid.mean(&e);
        let mut delta = vec![0.0; n];
        let solve = linalg::pcg(
            |x, y| {
                let l = grid.laplacian(x);
                for i in 0..n {
                    y[i] = e[i] * x[i] - l[i];
                }
            },
            |r, z| {
                let mut c = grid.analyze(r);
                let band = grid.synthesize(&c);
                c.scale_by_degree(|l| 1.0 / (mean + (l * (l + 1)) as f64));
                let s = grid.synthesize(&c);
                for i in 0..n {
                    z[i] = s[i] + (r[i] - band[i]) / mean;
                }
            },
            dot,
            &r,
            &mut delta,
            1e-13,
            400,
        );
        // An unconverged inner solve is still a descent direction for the line search.
        if let Err(err) = solve {
            if !delta.iter().all(|d| d.is_finite()) {
                return Err(err);
            }
        }
        let r0 = l2(&r);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| w[i] + step * delta[i]).collect();
            let (_, rt) = kw_residual(grid, &trial, f);
            let rn = l2(&rt);
            if rn.is_finite() && rn <= (1.0 - 1e-4 * step) * r0 {
                w = trial;
                break;
            }
            step *= 0.5;
            if step < 1e-6 {
                return Err(Error::Convergence(format!("Newton line search failed; residual history {history:?}")));
            }
        }
        newton += 1;
    }
    let (residual, _) = kw_residual(grid, &w, f);
    let sandwiched = (0..n).all(|i| pair.lower[i] <= w[i] && w[i] <= pair.upper[i]);
    Ok(KwSolution {
        w,
        residual,
        pair,
        picard_iterations: picard,
        newton_iterations: newton,
        monotone,
        sandwiched,
        residual_history: history,
    })
}
