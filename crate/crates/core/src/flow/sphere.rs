//! Backward Euler for `∂_t u = Δ₀ log u − 2` with the spectral round Laplacian.

use super::fv::{NewtonOutcome, NEWTON_TOL};
use crate::error::{Error, Result};
use crate::geometry::SphereGrid;
use crate::linalg;

const NEWTON_MAX_ITER: usize = 40;
const MAX_UPDATE: f64 = 2.0;

/// Solves `e^w − u_old − dt (Δ₀ w − 2) = 0` by Newton with spectrally
/// preconditioned CG in the quadrature inner product.
pub(crate) fn implicit_step(grid: &SphereGrid, u_old: &[f64], dt: f64) -> Result<NewtonOutcome> {
    let weights = grid.area_weights();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(&weights).map(|((x, y), w)| x * y * w).sum() };
    let mut w: Vec<f64> = u_old.iter().map(|u| u.ln()).collect();
    let n = w.len();
    let mut history = Vec::new();
    for it in 0..=NEWTON_MAX_ITER {
        let lap = grid.laplacian(&w);
        let f: Vec<f64> = (0..n).map(|i| w[i].exp() - u_old[i] - dt * (lap[i] - 2.0)).collect();
        let res = (0..n).map(|i| f[i].abs() / w[i].exp().max(1.0)).fold(0.0, f64::max);
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
        let ew: Vec<f64> = w.iter().map(|v| v.exp()).collect();
        let mean = grid.mean(&ew);
        let b: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; n];
        linalg::pcg(
            |x, y| {
                let l = grid.laplacian(x);
                for i in 0..n {
                    y[i] = ew[i] * x[i] - dt * l[i];
                }
            },
            |r, z| {
                let mut c = grid.analyze(r);
                let band = grid.synthesize(&c);
                c.scale_by_degree(|l| 1.0 / (mean + dt * (l * (l + 1)) as f64));
                let s = grid.synthesize(&c);
                for i in 0..n {
                    z[i] = s[i] + (r[i] - band[i]) / mean;
                }
            },
            dot,
            &b,
            &mut delta,
            1e-12,
            400,
        )?;
        for i in 0..n {
            w[i] += delta[i].clamp(-MAX_UPDATE, MAX_UPDATE);
        }
    }
    Err(Error::Convergence(format!(
        "sphere Newton did not reach {NEWTON_TOL:.0e}; residual history {:?}",
        history.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>()
    )))
}
