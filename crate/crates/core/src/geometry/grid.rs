use super::{Point, SphereGrid};
use crate::error::{domain, Result};
use crate::linalg::GridShape;
use std::f64::consts::PI;
use std::sync::Arc;

/// Vertex-centred uniform grid on the square `[−R, R]²` with `n` intervals per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianGrid {
    radius: f64,
    n: usize,
}

impl CartesianGrid {
    pub fn new(radius: f64, n: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || n < 4 {
            return domain(format!("Cartesian grid needs R > 0 and n ≥ 4, got R = {radius}, n = {n}"));
        }
        Ok(Self { radius, n })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of intervals per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / self.n as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn point(&self, k: usize) -> Point {
        let m = self.n + 1;
        let dx = self.spacing();
        [-self.radius + (k % m) as f64 * dx, -self.radius + (k / m) as f64 * dx]
    }

    pub fn shape(&self) -> GridShape {
        GridShape { nx: self.n + 1, ny: self.n + 1, periodic_y: false }
    }

    /// Five-point Laplacian; NaN on the outermost rows and columns.
    pub fn laplacian_interior(&self, f: &[f64]) -> Vec<f64> {
        let m = self.n + 1;
        let inv = 1.0 / (self.spacing() * self.spacing());
        let mut out = vec![f64::NAN; f.len()];
        for j in 1..m - 1 {
            for i in 1..m - 1 {
                let k = j * m + i;
                out[k] = (f[k - 1] + f[k + 1] + f[k - m] + f[k + m] - 4.0 * f[k]) * inv;
            }
        }
        out
    }

    /// Index of the node of `self` that coincides with node `k` of `other`,
    /// when both grids share a spacing and are concentric.
    pub fn matching_node(&self, other: &CartesianGrid, k: usize) -> Option<usize> {
        let dx = self.spacing();
        if (dx - other.spacing()).abs() > 1e-12 * dx {
            return None;
        }
        let shift = ((self.radius - other.radius) / dx).round() as i64;
        let m = other.n as i64 + 1;
        let (i, j) = ((k as i64) % m + shift, (k as i64) / m + shift);
        let ms = self.n as i64 + 1;
        (i >= 0 && j >= 0 && i < ms && j < ms).then(|| (j * ms + i) as usize)
    }
}

/// Role of a Cartesian node in a ball chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Unknown of the discrete problem.
    Active,
    /// Dirichlet node adjacent to the active set, strictly inside the ball.
    Collar,
    /// Unused node.
    Outside,
}

/// Active set `|x| ≤ R − 2Δx` of a Cartesian grid plus its Dirichlet collar.
#[derive(Debug, Clone)]
pub struct BallLayout {
    grid: CartesianGrid,
    roles: Vec<NodeRole>,
}

impl BallLayout {
    pub fn new(grid: CartesianGrid) -> Self {
        let dx = grid.spacing();
        let cut = grid.radius() - 2.0 * dx;
        let m = grid.nodes_per_axis();
        let mut roles: Vec<NodeRole> = (0..grid.len())
            .map(|k| {
                let x = grid.point(k);
                if x[0].hypot(x[1]) <= cut + 1e-12 * dx {
                    NodeRole::Active
                } else {
                    NodeRole::Outside
                }
            })
            .collect();
        for j in 0..m {
            for i in 0..m {
                let k = j * m + i;
                if roles[k] != NodeRole::Outside {
                    continue;
                }
                let near = (i > 0 && roles[k - 1] == NodeRole::Active)
                    || (i + 1 < m && roles[k + 1] == NodeRole::Active)
                    || (j > 0 && roles[k - m] == NodeRole::Active)
                    || (j + 1 < m && roles[k + m] == NodeRole::Active);
                if near {
                    roles[k] = NodeRole::Collar;
                }
            }
        }
        Self { grid, roles }
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.roles[k] == NodeRole::Active
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.roles.len()).filter(|&k| self.roles[k] == NodeRole::Active)
    }
}

/// Cylinder chart `s = log r ∈ [s_min, s_max]`, `θ` periodic, of the punctured plane.
///
/// A factor `u` against `dx²` becomes `v = u·r²` against `ds² + dθ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPolarGrid {
    s_min: f64,
    s_max: f64,
    n_s: usize,
    n_theta: usize,
}

impl LogPolarGrid {
    pub fn new(r_min: f64, r_max: f64, n_s: usize, n_theta: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) || n_s < 4 || n_theta < 4 || n_theta % 2 != 0 {
            return domain(format!(
                "log-polar grid needs 0 < r_min < r_max, n_s ≥ 4 and even n_θ ≥ 4 \
                 (got {r_min}, {r_max}, {n_s}, {n_theta})"
            ));
        }
        Ok(Self { s_min: r_min.ln(), s_max: r_max.ln(), n_s, n_theta })
    }

    /// Grid with `ds ≈ dθ`, `n_s` rounded up to a multiple of `align`.
    pub fn isotropic(r_min: f64, r_max: f64, n_theta: usize, align: usize) -> Result<Self> {
        let dtheta = 2.0 * PI / n_theta as f64;
        let raw = ((r_max.ln() - r_min.ln()) / dtheta).ceil() as usize;
        let align = align.max(1);
        Self::new(r_min, r_max, raw.div_ceil(align) * align, n_theta)
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn ds(&self) -> f64 {
        (self.s_max - self.s_min) / self.n_s as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn r_min(&self) -> f64 {
        self.s_min.exp()
    }

    pub fn r_max(&self) -> f64 {
        self.s_max.exp()
    }

    pub fn len(&self) -> usize {
        (self.n_s + 1) * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        k * (self.n_s + 1) + j
    }

    /// `(s index, θ index)` of node `idx`.
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % (self.n_s + 1), idx / (self.n_s + 1))
    }

    pub fn s(&self, j: usize) -> f64 {
        self.s_min + j as f64 * self.ds()
    }

    pub fn radius_of(&self, idx: usize) -> f64 {
        self.s(self.coords(idx).0).exp()
    }

    pub fn point(&self, idx: usize) -> Point {
        let (j, k) = self.coords(idx);
        let r = self.s(j).exp();
        let th = k as f64 * self.dtheta();
        [r * th.cos(), r * th.sin()]
    }

    pub fn shape(&self) -> GridShape {
        GridShape { nx: self.n_s + 1, ny: self.n_theta, periodic_y: true }
    }

    /// Control-volume areas in `(s, θ)`; halved on the two end circles.
    pub fn volumes(&self) -> Vec<f64> {
        let base = self.ds() * self.dtheta();
        (0..self.len())
            .map(|idx| {
                let j = self.coords(idx).0;
                if j == 0 || j == self.n_s {
                    0.5 * base
                } else {
                    base
                }
            })
            .collect()
    }

    /// Cylinder Laplacian `∂²_s + ∂²_θ`; NaN on the end circles.
    pub fn laplacian_interior(&self, f: &[f64]) -> Vec<f64> {
        let m = self.n_s + 1;
        let (is2, it2) = (1.0 / self.ds().powi(2), 1.0 / self.dtheta().powi(2));
        let mut out = vec![f64::NAN; f.len()];
        for k in 0..self.n_theta {
            let kp = (k + 1) % self.n_theta;
            let km = (k + self.n_theta - 1) % self.n_theta;
            for j in 1..self.n_s {
                let c = k * m + j;
                out[c] = (f[c - 1] + f[c + 1] - 2.0 * f[c]) * is2
                    + (f[kp * m + j] + f[km * m + j] - 2.0 * f[c]) * it2;
            }
        }
        out
    }
}

/// Discretization of one chart of a model surface.
#[derive(Debug, Clone)]
pub enum ChartGrid {
    /// Ball chart `B_R` on a Cartesian grid.
    Cartesian(CartesianGrid),
    /// Whole punctured plane in cylinder coordinates.
    LogPolar(LogPolarGrid),
    /// Round sphere, Gauss–Legendre × uniform longitude.
    Sphere(Arc<SphereGrid>),
}

impl ChartGrid {
    pub fn len(&self) -> usize {
        match self {
            ChartGrid::Cartesian(g) => g.len(),
            ChartGrid::LogPolar(g) => g.len(),
            ChartGrid::Sphere(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<SphereGrid> for ChartGrid {
    fn from(g: SphereGrid) -> Self {
        ChartGrid::Sphere(Arc::new(g))
    }
}
