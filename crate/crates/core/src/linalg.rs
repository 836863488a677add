//! Structured-grid sparse operators, geometric multigrid and preconditioned CG.

use crate::error::{Error, Result};

/// Logical shape of a structured grid, `index = j·nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    /// Whether the `j` direction wraps around.
    pub periodic_y: bool,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows(&self, j: usize) -> [Option<usize>; 3] {
        let below = if j > 0 {
            Some(j - 1)
        } else if self.periodic_y {
            Some(self.ny - 1)
        } else {
            None
        };
        let above = if j + 1 < self.ny {
            Some(j + 1)
        } else if self.periodic_y {
            Some(0)
        } else {
            None
        };
        [below, Some(j), above]
    }

    fn cols(&self, i: usize) -> [Option<usize>; 3] {
        [i.checked_sub(1), Some(i), (i + 1 < self.nx).then_some(i + 1)]
    }

    fn coarsen(&self) -> Option<GridShape> {
        let nx = ((self.nx - 1) % 2 == 0 && self.nx >= 5).then_some((self.nx + 1) / 2)?;
        let ny = if self.periodic_y {
            (self.ny % 2 == 0 && self.ny >= 8).then_some(self.ny / 2)?
        } else {
            ((self.ny - 1) % 2 == 0 && self.ny >= 5).then_some((self.ny + 1) / 2)?
        };
        Some(GridShape { nx, ny, periodic_y: self.periodic_y })
    }
}

/// Offset slot of the neighbour `(i + di, j + dj)`, `di, dj ∈ {−1, 0, 1}`.
pub const fn slot(di: i32, dj: i32) -> usize {
    ((dj + 1) * 3 + (di + 1)) as usize
}

pub const CENTER: usize = slot(0, 0);

/// Nine-point stencil operator on a [`GridShape`].
///
/// Couplings that point off a non-periodic edge must be zero.
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    shape: GridShape,
    coef: Vec<[f64; 9]>,
}

impl StencilMatrix {
    pub fn zeros(shape: GridShape) -> Self {
        Self { shape, coef: vec![[0.0; 9]; shape.len()] }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.coef.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coef.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64; 9] {
        &self.coef[k]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64; 9] {
        &mut self.coef[k]
    }

    /// Replaces row `k` by the identity row.
    pub fn set_identity_row(&mut self, k: usize) {
        self.coef[k] = [0.0; 9];
        self.coef[k][CENTER] = 1.0;
    }

    /// Off-centre sum `Σ c·x` of row `(j, i)`, skipping missing neighbours.
    #[inline]
    fn off_centre(&self, x: &[f64], rows: &[Option<usize>; 3], j: usize, i: usize) -> f64 {
        let s = self.shape;
        let c = &self.coef[j * s.nx + i];
        if i > 0 && i + 1 < s.nx {
            if let [Some(r0), Some(r1), Some(r2)] = *rows {
                let (a, b, d) = (r0 * s.nx + i, r1 * s.nx + i, r2 * s.nx + i);
                return c[0] * x[a - 1] + c[1] * x[a] + c[2] * x[a + 1]
                    + c[3] * x[b - 1] + c[5] * x[b + 1]
                    + c[6] * x[d - 1] + c[7] * x[d] + c[8] * x[d + 1];
            }
        }
        let cols = s.cols(i);
        let mut acc = 0.0;
        for (dj, r) in rows.iter().enumerate() {
            if let Some(r) = r {
                for (di, q) in cols.iter().enumerate() {
                    let o = dj * 3 + di;
                    if o != CENTER {
                        if let Some(q) = q {
                            acc += c[o] * x[r * s.nx + q];
                        }
                    }
                }
            }
        }
        acc
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = self.shape;
        let nx = s.nx;
        for j in 0..s.ny {
            let rows = s.rows(j);
            let edge = |i: usize| {
                let k = j * nx + i;
                self.coef[k][CENTER] * x[k] + self.off_centre(x, &rows, j, i)
            };
            y[j * nx] = edge(0);
            y[j * nx + nx - 1] = edge(nx - 1);
            if let [Some(r0), Some(r1), Some(r2)] = rows {
                let (xa, xb, xc) = (&x[r0 * nx..][..nx], &x[r1 * nx..][..nx], &x[r2 * nx..][..nx]);
                let c = &self.coef[j * nx..][..nx];
                let yr = &mut y[j * nx..][..nx];
                for i in 1..nx - 1 {
                    let c = &c[i];
                    yr[i] = c[0] * xa[i - 1] + c[1] * xa[i] + c[2] * xa[i + 1]
                        + c[3] * xb[i - 1] + c[4] * xb[i] + c[5] * xb[i + 1]
                        + c[6] * xc[i - 1] + c[7] * xc[i] + c[8] * xc[i + 1];
                }
            } else {
                for i in 1..nx - 1 {
                    y[j * nx + i] = edge(i);
                }
            }
        }
    }

    fn gauss_seidel(&self, b: &[f64], x: &mut [f64], forward: bool) {
        let s = self.shape;
        let nx = s.nx;
        let row = |x: &mut [f64], j: usize| {
            let rows = s.rows(j);
            let edge = |x: &mut [f64], i: usize| {
                let k = j * nx + i;
                x[k] = (b[k] - self.off_centre(x, &rows, j, i)) / self.coef[k][CENTER];
            };
            if forward {
                edge(x, 0);
            } else {
                edge(x, nx - 1);
            }
            if let [Some(r0), Some(r1), Some(r2)] = rows {
                let (a, m, d) = (r0 * nx, r1 * nx, r2 * nx);
                let c = &self.coef[m..][..nx];
                let br = &b[m..][..nx];
                let mut body = |i: usize| {
                    let c = &c[i];
                    let off = c[0] * x[a + i - 1] + c[1] * x[a + i] + c[2] * x[a + i + 1]
                        + c[3] * x[m + i - 1] + c[5] * x[m + i + 1]
                        + c[6] * x[d + i - 1] + c[7] * x[d + i] + c[8] * x[d + i + 1];
                    x[m + i] = (br[i] - off) / c[CENTER];
                };
                if forward {
                    (1..nx - 1).for_each(&mut body);
                } else {
                    (1..nx - 1).rev().for_each(&mut body);
                }
            } else if forward {
                (1..nx - 1).for_each(|i| edge(x, i));
            } else {
                (1..nx - 1).rev().for_each(|i| edge(x, i));
            }
            if forward {
                edge(x, nx - 1);
            } else {
                edge(x, 0);
            }
        };
        if forward {
            (0..s.ny).for_each(|j| row(x, j));
        } else {
            (0..s.ny).rev().for_each(|j| row(x, j));
        }
    }

    fn is_decoupled(&self, k: usize) -> bool {
        self.coef[k].iter().enumerate().all(|(o, v)| o == CENTER || *v == 0.0)
    }

    fn to_dense(&self) -> Vec<f64> {
        let n = self.len();
        let s = self.shape;
        let mut a = vec![0.0; n * n];
        for j in 0..s.ny {
            for i in 0..s.nx {
                let k = j * s.nx + i;
                for (dj, r) in s.rows(j).iter().enumerate() {
                    for (di, q) in s.cols(i).iter().enumerate() {
                        if let (Some(r), Some(q)) = (r, q) {
                            a[k * n + r * s.nx + q] += self.coef[k][dj * 3 + di];
                        }
                    }
                }
            }
        }
        a
    }
}

/// Parents of fine index `i` along one axis with interpolation weights.
fn parents_1d(i: usize, n_coarse: usize, periodic: bool) -> ([(usize, f64); 2], usize) {
    if i % 2 == 0 {
        ([(i / 2, 1.0), (0, 0.0)], 1)
    } else {
        let hi = if periodic { ((i + 1) / 2) % n_coarse } else { (i + 1) / 2 };
        ([((i - 1) / 2, 0.5), (hi, 0.5)], 2)
    }
}

fn coarse_offset(from: usize, to: usize, n: usize, periodic: bool) -> i32 {
    let d = to as i64 - from as i64;
    let d = if periodic {
        let n = n as i64;
        if d > n / 2 {
            d - n
        } else if d < -(n / 2) {
            d + n
        } else {
            d
        }
    } else {
        d
    };
    debug_assert!(d.abs() <= 1, "Galerkin stencil exceeds nine points");
    d as i32
}

struct Level {
    op: StencilMatrix,
    /// Fine nodes whose prolongation row is zero.
    skip: Vec<bool>,
}

/// Geometric multigrid V-cycle with bilinear transfer and Galerkin coarse operators.
pub struct Multigrid {
    levels: Vec<Level>,
    coarse: CoarseSolver,
}

enum CoarseSolver {
    Cholesky { n: usize, l: Vec<f64> },
    Smoothing,
}

const DENSE_LIMIT: usize = 700;

impl Multigrid {
    pub fn new(op: &StencilMatrix) -> Self {
        let mut levels = Vec::new();
        let mut current = op.clone();
        loop {
            let skip: Vec<bool> = (0..current.len()).map(|k| current.is_decoupled(k)).collect();
            let next = if current.len() > DENSE_LIMIT { current.shape.coarsen() } else { None };
            match next {
                Some(cs) => {
                    let coarse = galerkin(&current, &skip, cs);
                    levels.push(Level { op: current, skip });
                    current = coarse;
                }
                None => {
                    let coarse = if current.len() <= 4 * DENSE_LIMIT {
                        let n = current.len();
                        match cholesky(current.to_dense(), n) {
                            Some(l) => CoarseSolver::Cholesky { n, l },
                            None => CoarseSolver::Smoothing,
                        }
                    } else {
                        CoarseSolver::Smoothing
                    };
                    levels.push(Level { op: current, skip });
                    return Self { levels, coarse };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// One symmetric V-cycle applied to `r` with zero initial guess.
    pub fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let out = self.vcycle(0, r);
        z.copy_from_slice(&out);
    }

    fn vcycle(&self, level: usize, b: &[f64]) -> Vec<f64> {
        let lv = &self.levels[level];
        let mut x = vec![0.0; b.len()];
        if level + 1 == self.levels.len() {
            match &self.coarse {
                CoarseSolver::Cholesky { n, l } => {
                    x.copy_from_slice(b);
                    cholesky_solve(l, *n, &mut x);
                }
                CoarseSolver::Smoothing => {
                    for _ in 0..40 {
                        lv.op.gauss_seidel(b, &mut x, true);
                        lv.op.gauss_seidel(b, &mut x, false);
                    }
                }
            }
            return x;
        }
        lv.op.gauss_seidel(b, &mut x, true);
        let mut r = vec![0.0; b.len()];
        lv.op.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let cshape = self.levels[level + 1].op.shape;
        let rc = restrict(&r, lv.op.shape, cshape, &lv.skip);
        let ec = self.vcycle(level + 1, &rc);
        prolong_add(&ec, cshape, lv.op.shape, &lv.skip, &mut x);
        lv.op.gauss_seidel(b, &mut x, false);
        x
    }
}

fn for_each_parent(
    k: usize,
    fine: GridShape,
    coarse: GridShape,
    mut f: impl FnMut(usize, f64),
) {
    let (i, j) = (k % fine.nx, k / fine.nx);
    let (px, nx) = parents_1d(i, coarse.nx, false);
    let (py, ny) = parents_1d(j, coarse.ny, fine.periodic_y);
    for (cj, wy) in &py[..ny] {
        for (ci, wx) in &px[..nx] {
            f(cj * coarse.nx + ci, wx * wy);
        }
    }
}

/// Per-axis parent tables of a fine grid.
fn parent_tables(fine: GridShape, coarse: GridShape) -> (Vec<([(usize, f64); 2], usize)>, Vec<([(usize, f64); 2], usize)>) {
    let px = (0..fine.nx).map(|i| parents_1d(i, coarse.nx, false)).collect();
    let py = (0..fine.ny).map(|j| parents_1d(j, coarse.ny, fine.periodic_y)).collect();
    (px, py)
}

fn restrict(r: &[f64], fine: GridShape, coarse: GridShape, skip: &[bool]) -> Vec<f64> {
    let mut rc = vec![0.0; coarse.len()];
    let (px, py) = parent_tables(fine, coarse);
    for (j, (pj, nj)) in py.iter().enumerate() {
        for (i, (pi, ni)) in px.iter().enumerate() {
            let k = j * fine.nx + i;
            if skip[k] || r[k] == 0.0 {
                continue;
            }
            for (cj, wy) in &pj[..*nj] {
                for (ci, wx) in &pi[..*ni] {
                    rc[cj * coarse.nx + ci] += wx * wy * r[k];
                }
            }
        }
    }
    rc
}

fn prolong_add(ec: &[f64], coarse: GridShape, fine: GridShape, skip: &[bool], x: &mut [f64]) {
    let (px, py) = parent_tables(fine, coarse);
    for (j, (pj, nj)) in py.iter().enumerate() {
        for (i, (pi, ni)) in px.iter().enumerate() {
            let k = j * fine.nx + i;
            if skip[k] {
                continue;
            }
            let mut acc = 0.0;
            for (cj, wy) in &pj[..*nj] {
                for (ci, wx) in &pi[..*ni] {
                    acc += wx * wy * ec[cj * coarse.nx + ci];
                }
            }
            x[k] += acc;
        }
    }
}

fn galerkin(a: &StencilMatrix, skip: &[bool], cs: GridShape) -> StencilMatrix {
    let fs = a.shape;
    let mut out = StencilMatrix::zeros(cs);
    let mut gparents: Vec<(usize, f64)> = Vec::with_capacity(4);
    for j in 0..fs.ny {
        let rows = fs.rows(j);
        for i in 0..fs.nx {
            let f = j * fs.nx + i;
            if skip[f] {
                continue;
            }
            let cols = fs.cols(i);
            for (dj, r) in rows.iter().enumerate() {
                for (di, q) in cols.iter().enumerate() {
                    let (Some(r), Some(q)) = (r, q) else { continue };
                    let a_fg = a.coef[f][dj * 3 + di];
                    let g = r * fs.nx + q;
                    if a_fg == 0.0 || skip[g] {
                        continue;
                    }
                    gparents.clear();
                    for_each_parent(g, fs, cs, |d, w| gparents.push((d, w)));
                    for_each_parent(f, fs, cs, |c, wc| {
                        let (ci, cj) = (c % cs.nx, c / cs.nx);
                        for &(d, wd) in &gparents {
                            let (di2, dj2) = (d % cs.nx, d / cs.nx);
                            let ox = coarse_offset(ci, di2, cs.nx, false);
                            let oy = coarse_offset(cj, dj2, cs.ny, cs.periodic_y);
                            out.coef[c][slot(ox, oy)] += wc * a_fg * wd;
                        }
                    });
                }
            }
        }
    }
    for k in 0..out.len() {
        if out.coef[k][CENTER] == 0.0 {
            out.set_identity_row(k);
        }
    }
    out
}

fn cholesky(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(a)
}

fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side.
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator in the inner product `dot`.
pub fn pcg<A, M, D>(
    mut apply: A,
    mut precond: M,
    dot: D,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> Result<SolveStats>
where
    A: FnMut(&[f64], &mut [f64]),
    M: FnMut(&[f64], &mut [f64]),
    D: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= rtol {
            return Ok(SolveStats { iterations: it, relative_residual: rel });
        }
        if it == max_iter {
            return Err(Error::Convergence(format!(
                "PCG stopped after {max_iter} iterations at relative residual {rel:.3e}"
            )));
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Convergence(format!("PCG breakdown, pᵀAp = {pap:.3e}")));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    unreachable!()
}

pub fn euclidean_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` by multigrid-preconditioned CG starting from `x`.
pub fn solve_spd(a: &StencilMatrix, b: &[f64], x: &mut [f64], rtol: f64) -> Result<SolveStats> {
    let mg = Multigrid::new(a);
    pcg(|v, out| a.apply(v, out), |r, z| mg.precondition(r, z), euclidean_dot, b, x, rtol, 500)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Five-point `−Δ` (scaled by h²) on the interior with identity boundary rows.
    fn dirichlet_laplacian(n: usize) -> StencilMatrix {
        let shape = GridShape { nx: n + 1, ny: n + 1, periodic_y: false };
        let mut a = StencilMatrix::zeros(shape);
        for j in 0..=n {
            for i in 0..=n {
                let k = j * (n + 1) + i;
                if i == 0 || j == 0 || i == n || j == n {
                    a.set_identity_row(k);
                    continue;
                }
                let row = a.row_mut(k);
                row[CENTER] = 4.0;
                for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (ii, jj) = (i as i32 + di, j as i32 + dj);
                    if ii > 0 && jj > 0 && ii < n as i32 && jj < n as i32 {
                        row[slot(di, dj)] = -1.0;
                    }
                }
            }
        }
        a
    }

    #[test]
    fn multigrid_pcg_converges_fast() {
        for n in [64usize, 128, 256] {
            let a = dirichlet_laplacian(n);
            let b: Vec<f64> = (0..a.len()).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
            let mut x = vec![0.0; a.len()];
            let stats = solve_spd(&a, &b, &mut x, 1e-10).unwrap();
            assert!(stats.iterations <= 25, "n = {n}: {stats:?}");
            let mut r = vec![0.0; a.len()];
            a.apply(&x, &mut r);
            let err = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-7, "n = {n}: {err}");
        }
    }

    #[test]
    fn periodic_shift_operator_matches_dense_solve() {
        // Helmholtz-type operator on a periodic strip: 4 + μ on the diagonal.
        let shape = GridShape { nx: 33, ny: 64, periodic_y: true };
        let mut a = StencilMatrix::zeros(shape);
        for j in 0..shape.ny {
            for i in 0..shape.nx {
                let k = j * shape.nx + i;
                let row = a.row_mut(k);
                row[CENTER] = 0.1 + if i > 0 { 1.0 } else { 0.0 } + if i + 1 < shape.nx { 1.0 } else { 0.0 } + 2.0;
                if i > 0 {
                    row[slot(-1, 0)] = -1.0;
                }
                if i + 1 < shape.nx {
                    row[slot(1, 0)] = -1.0;
                }
                row[slot(0, -1)] = -1.0;
                row[slot(0, 1)] = -1.0;
            }
        }
        let b: Vec<f64> = (0..a.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; a.len()];
        let stats = solve_spd(&a, &b, &mut x, 1e-12).unwrap();
        assert!(stats.iterations < 40, "{stats:?}");
        let l = cholesky(a.to_dense(), a.len()).unwrap();
        let mut y = b.clone();
        cholesky_solve(&l, a.len(), &mut y);
        let err = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
}
