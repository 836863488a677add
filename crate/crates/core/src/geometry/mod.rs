//! Model surfaces, background metrics and discretization grids.

mod grid;
mod sphere;

pub use grid::{BallLayout, CartesianGrid, ChartGrid, LogPolarGrid, NodeRole};
pub use sphere::{SpectralCoeffs, SphereGrid};

use crate::error::{domain, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A point of a planar chart.
pub type Point = [f64; 2];

/// The three model surfaces: unit disc, plane and round sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Disc,
    Plane,
    Sphere,
}

impl std::fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SurfaceKind::Disc => "disc",
            SurfaceKind::Plane => "plane",
            SurfaceKind::Sphere => "sphere",
        })
    }
}

#[cfg(test)]
pub(crate) fn norm(x: Point) -> f64 {
    x[0].hypot(x[1])
}

/// Conformal factor `(2R/(R²−|x|²))²` of the complete hyperbolic metric on `B_R`.
pub fn hyperbolic_factor(radius: f64, x: Point) -> Result<f64> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if !(radius > 0.0) || r2 >= radius * radius {
        return domain(format!("|x| = {} is not inside B_{radius}", r2.sqrt()));
    }
    Ok(hyperbolic_factor_unchecked(radius, r2))
}

#[inline]
pub(crate) fn hyperbolic_factor_unchecked(radius: f64, r2: f64) -> f64 {
    let q = 2.0 * radius / (radius * radius - r2);
    q * q
}

/// Hyperbolic area `4πr²/(R²−r²)` of `B_r` for the complete metric on `B_R`.
pub fn hyperbolic_volume(r: f64, radius: f64) -> Result<f64> {
    if !(r >= 0.0) || r >= radius {
        return domain(format!("need 0 ≤ r < R, got r = {r}, R = {radius}"));
    }
    Ok(4.0 * PI * r * r / (radius * radius - r * r))
}

/// Stereographic pullback `4/(1+|x|²)²` of the round unit sphere.
pub fn round_background(x: Point) -> f64 {
    let d = 1.0 + x[0] * x[0] + x[1] * x[1];
    4.0 / (d * d)
}

/// A strictly positive conformal factor sampled at the nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalField {
    values: Vec<f64>,
}

impl ConformalField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!(
                "conformal factor must be positive and finite, node {k} has {}",
                values[k]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Gaussian curvature `K = −Δ log u / (2u)` of `u·(chart background)`.
///
/// On the sphere the background is round and `K = (1 − ½Δ₀ log u)/u`.
/// Nodes where the discrete Laplacian is unavailable (the outer rows of a
/// Cartesian chart, the ends of a log-polar chart) are NaN.
pub fn curvature(u: &[f64], grid: &ChartGrid) -> Result<Vec<f64>> {
    if u.len() != grid.len() {
        return Err(Error::Precondition(format!(
            "field has {} values, grid has {} nodes",
            u.len(),
            grid.len()
        )));
    }
    if let Some(k) = u.iter().position(|v| !(*v > 0.0)) {
        return domain(format!("curvature needs u > 0, node {k} has {}", u[k]));
    }
    let logu: Vec<f64> = u.iter().map(|v| v.ln()).collect();
    match grid {
        ChartGrid::Cartesian(g) => {
            let lap = g.laplacian_interior(&logu);
            Ok(lap.iter().zip(u).map(|(l, v)| -l / (2.0 * v)).collect())
        }
        ChartGrid::LogPolar(g) => {
            let lap = g.laplacian_interior(&logu);
            Ok(lap.iter().zip(u).map(|(l, v)| -l / (2.0 * v)).collect())
        }
        ChartGrid::Sphere(g) => {
            let lap = g.laplacian(&logu);
            Ok(lap.iter().zip(u).map(|(l, v)| (1.0 - 0.5 * l) / v).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hyperbolic_factor_examples() {
        assert_relative_eq!(hyperbolic_factor(1.0, [0.0, 0.0]).unwrap(), 4.0);
        assert_relative_eq!(hyperbolic_factor(2.0, [0.0, 0.0]).unwrap(), 1.0);
        let s = 0.5f64.sqrt();
        assert_relative_eq!(hyperbolic_factor(1.0, [s, 0.0]).unwrap(), 16.0, epsilon = 1e-12);
        assert!(hyperbolic_factor(1.0, [1.0, 0.0]).is_err());
        assert!(hyperbolic_factor(1.0, [0.8, 0.8]).is_err());
    }

    // Independent route: radial Gauss–Legendre quadrature of 2πρ·h_R(ρ).
    fn volume_by_quadrature(r: f64, radius: f64) -> f64 {
        crate::quad::integrate(0.0, r, 50, 4, |rho| {
            2.0 * PI * rho * hyperbolic_factor_unchecked(radius, rho * rho)
        })
    }

    #[test]
    fn hyperbolic_volume_matches_quadrature() {
        for k in 1..=9 {
            let radius = 1.7;
            let r = 0.1 * k as f64 * radius;
            let exact = hyperbolic_volume(r, radius).unwrap();
            let quad = volume_by_quadrature(r, radius);
            assert!((exact - quad).abs() <= 1e-6 * exact, "r/R = {}", 0.1 * k as f64);
        }
    }

    #[test]
    fn hyperbolic_volume_examples() {
        assert_eq!(hyperbolic_volume(0.0, 1.0).unwrap(), 0.0);
        for radius in [0.5, 1.0, 3.0] {
            let v = hyperbolic_volume(radius / 2f64.sqrt(), radius).unwrap();
            assert_relative_eq!(v, 4.0 * PI, max_relative = 1e-12);
        }
        // Frozen from the quadrature oracle above.
        assert_relative_eq!(hyperbolic_volume(1.0, 2.0).unwrap(), 4.188790204786391, max_relative = 1e-12);
        assert_relative_eq!(volume_by_quadrature(1.0, 2.0), 4.188790204786391, max_relative = 1e-9);
        assert!(hyperbolic_volume(1.0, 1.0).is_err());
    }

    #[test]
    fn round_background_total_area() {
        assert_eq!(round_background([0.0, 0.0]), 4.0);
        // ∫ 2πρ·4/(1+ρ²)² over [0, L] plus the analytic tail 4π/(1+L²).
        let l = 50.0;
        let body = crate::quad::integrate(0.0, l, 40, 20, |rho| 2.0 * PI * rho * round_background([rho, 0.0]));
        assert_relative_eq!(body, 4.0 * PI * l * l / (1.0 + l * l), max_relative = 1e-10);
        assert_relative_eq!(body + 4.0 * PI / (1.0 + l * l), 4.0 * PI, max_relative = 1e-10);
        let far = round_background([1e3, 0.0]) * 1e12;
        assert_relative_eq!(far, 4.0, max_relative = 1e-5);
    }

    #[test]
    fn curvature_of_big_bang_converges() {
        let t = 0.3;
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let g = CartesianGrid::new(1.0, n).unwrap();
            let u: Vec<f64> = (0..g.len())
                .map(|k| {
                    let x = g.point(k);
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    if r2 < 0.99 {
                        2.0 * t * hyperbolic_factor_unchecked(1.0, r2)
                    } else {
                        1.0
                    }
                })
                .collect();
            let k = curvature(&u, &ChartGrid::Cartesian(g.clone())).unwrap();
            let err = (0..g.len())
                .filter(|&i| norm(g.point(i)) <= 0.8)
                .map(|i| (k[i] + 1.0 / (2.0 * t)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[2] < 0.05, "{errs:?}");
        assert!((errs[1] / errs[2]).log2() >= 1.0, "{errs:?}");
        assert!((errs[0] / errs[1]).log2() >= 1.0, "{errs:?}");
    }

    #[test]
    fn curvature_constant_cases() {
        let g = ChartGrid::Cartesian(CartesianGrid::new(2.0, 16).unwrap());
        let k = curvature(&vec![1.0; g.len()], &g).unwrap();
        assert!(k.iter().filter(|v| v.is_finite()).all(|v| v.abs() < 1e-14));
        let s = ChartGrid::from(SphereGrid::new(8));
        let k = curvature(&vec![2.5; s.len()], &s).unwrap();
        assert!(k.iter().all(|v| (v - 0.4).abs() < 1e-12));
        let mut bad = vec![1.0; s.len()];
        bad[3] = 0.0;
        assert!(matches!(curvature(&bad, &s), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn hyperbolic_factor_lower_bound(radius in 0.1f64..20.0, a in 0.0f64..0.999, th in 0.0f64..6.3) {
            let x = [a * radius * th.cos(), a * radius * th.sin()];
            if let Ok(h) = hyperbolic_factor(radius, x) {
                prop_assert!(h >= 4.0 / (radius * radius) * (1.0 - 1e-12));
            }
        }
    }
}
