//! Finite-volume backward Euler for `∂_t u = Δ log u` in `w = log u`, solved by Newton.

use crate::error::{Error, Result};
use crate::linalg::{self, slot, Multigrid, StencilMatrix, CENTER};

/// Discrete system `V (e^w − u_old) + dt (L w − g) = 0` on the active nodes.
///
/// `L` is the conductance graph Laplacian including the diagonal weight of
/// Dirichlet neighbours; `g` collects Dirichlet contributions and fixed fluxes.
#[derive(Debug, Clone)]
pub(crate) struct FvSystem {
    pub active: Vec<bool>,
    pub volume: Vec<f64>,
    pub conduct: StencilMatrix,
    /// `(active node, Dirichlet node, conductance)`.
    pub dirichlet: Vec<(usize, usize, f64)>,
    /// Fixed boundary fluxes per node.
    pub source: Vec<f64>,
}

/// Result of one implicit step.
#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub w: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) const NEWTON_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 40;
const MAX_UPDATE: f64 = 2.0;
const UPDATE_TOL: f64 = 1e-10;
const ROUNDING_FLOOR: f64 = 1e-7;

impl FvSystem {
    fn rhs(&self, wb: &[f64]) -> Vec<f64> {
        let mut g = self.source.clone();
        for &(i, b, c) in &self.dirichlet {
            g[i] += c * wb[b];
        }
        g
    }

    /// Relative residual `|F_i| / (V_i e^{w_i})` and the raw residual.
    fn residual(&self, w: &[f64], u_old: &[f64], g: &[f64], dt: f64) -> (f64, Vec<f64>) {
        let n = w.len();
        let mut lw = vec![0.0; n];
        self.conduct.apply(&masked(w, &self.active), &mut lw);
        let mut f = vec![0.0; n];
        let mut worst = 0.0f64;
        for i in 0..n {
            if !self.active[i] {
                continue;
            }
            let u = w[i].exp();
            f[i] = self.volume[i] * (u - u_old[i]) + dt * (lw[i] - g[i]);
            worst = worst.max(f[i].abs() / (self.volume[i] * u));
        }
        (worst, f)
    }

    /// Solves one backward-Euler step from `u_old`, starting Newton at `w0`.
    /// `wb` holds the Dirichlet values of `w` at boundary nodes.
    pub fn step(&self, u_old: &[f64], w0: &[f64], wb: &[f64], dt: f64) -> Result<NewtonOutcome> {
        let n = w0.len();
        let g = self.rhs(wb);
        let mut w = w0.to_vec();
        for i in 0..n {
            if !self.active[i] {
                w[i] = 0.0;
            }
        }
        let mut history = Vec::new();
        let mut mg: Option<Multigrid> = None;
        for it in 0..=NEWTON_MAX_ITER {
            let (res, f) = self.residual(&w, u_old, &g, dt);
            if !res.is_finite() {
                break;
            }
            history.push(res);
            if res <= NEWTON_TOL {
                return Ok(NewtonOutcome { w, iterations: it, residual: res });
            }
            if it == NEWTON_MAX_ITER {
                break;
            }
            let mut jac = self.conduct.clone();
            for i in 0..n {
                let row = jac.row_mut(i);
                if self.active[i] {
                    row.iter_mut().for_each(|c| *c *= dt);
                    row[CENTER] += self.volume[i] * w[i].exp();
                }
            }
            let b: Vec<f64> = f.iter().map(|v| -v).collect();
            let mut delta = vec![0.0; n];
            // The hierarchy of the first Jacobian still preconditions later iterates well.
            let mg = mg.get_or_insert_with(|| Multigrid::new(&jac));
            linalg::pcg(
                |x, y| jac.apply(x, y),
                |r, z| mg.precondition(r, z),
                linalg::euclidean_dot,
                &b,
                &mut delta,
                1e-11,
                300,
            )?;
            let mut largest = 0.0f64;
            for i in 0..n {
                if self.active[i] {
                    w[i] += delta[i].clamp(-MAX_UPDATE, MAX_UPDATE);
                    largest = largest.max(delta[i].abs());
                }
            }
            // The residual can stall at its rounding floor once `u` has settled to relative precision.
            if largest <= UPDATE_TOL {
                let (res, _) = self.residual(&w, u_old, &g, dt);
                if res <= ROUNDING_FLOOR {
                    return Ok(NewtonOutcome { w, iterations: it + 1, residual: res });
                }
            }
        }
        Err(Error::Convergence(format!(
            "Newton did not reach {NEWTON_TOL:.0e}; residual history {:?}",
            history.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>()
        )))
    }
}

fn masked(w: &[f64], active: &[bool]) -> Vec<f64> {
    w.iter().zip(active).map(|(v, a)| if *a { *v } else { 0.0 }).collect()
}

/// Adds a symmetric coupling of conductance `c` between active nodes.
pub(crate) fn couple(m: &mut StencilMatrix, i: usize, di: i32, dj: i32, c: f64) {
    let row = m.row_mut(i);
    row[CENTER] += c;
    row[slot(di, dj)] -= c;
}
