//! Nonatomic Radon measures on the model surfaces, their masses and
//! pairings, the smoothing map `g_h(ν)` and a sufficient ordering test.

use crate::error::{domain, Error, Result};
use crate::geometry::{round_background, ChartGrid, ConformalField, Point, SphereGrid, SurfaceKind};
use crate::quad;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Absolutely continuous part of a measure.
///
/// Planar charts use Cartesian coordinates. On the sphere, centres are
/// `[colatitude, longitude]` and radii are geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcDensity {
    /// Isotropic Gaussian of the given total mass (before any clipping to the chart).
    Gaussian { center: [f64; 2], sigma: f64, mass: f64 },
    /// Constant density on `B_radius(0)` (the north-pole cap on the sphere), or everywhere.
    Constant {
        value: f64,
        #[serde(default)]
        radius: Option<f64>,
    },
    /// `scale` times the round metric: `4/(1+|x|²)²` on planar charts, `1` on the sphere.
    Round { scale: f64 },
    /// Bilinear interpolation of samples on a rectangular lattice, zero outside.
    Table { origin: [f64; 2], spacing: [f64; 2], nx: usize, ny: usize, values: Vec<f64> },
}

/// Mass spread along a polyline (great-circle arcs on the sphere).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeasure {
    pub points: Vec<[f64; 2]>,
    /// Mass per unit length.
    pub density: f64,
}

/// A nonatomic Radon measure: absolutely continuous part plus curve measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub surface: SurfaceKind,
    #[serde(default)]
    pub ac: Option<AcDensity>,
    #[serde(default)]
    pub curves: Vec<CurveMeasure>,
}

/// Integration region: a ball of the chart (geodesic cap on the sphere) or everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Whole,
    Ball { center: [f64; 2], radius: f64 },
}

pub(crate) fn sphere_point(angles: [f64; 2]) -> [f64; 3] {
    let (st, ct) = angles[0].sin_cos();
    let (sp, cp) = angles[1].sin_cos();
    [st * cp, st * sp, ct]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn geodesic(a: [f64; 3], b: [f64; 3]) -> f64 {
    // atan2 form stays accurate for nearby and antipodal points.
    let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    dot3(c, c).sqrt().atan2(dot3(a, b))
}

/// Orthonormal tangent basis at a unit vector.
fn tangent_basis(v: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = if v[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let d = dot3(a, v);
    let mut e1 = [a[0] - d * v[0], a[1] - d * v[1], a[2] - d * v[2]];
    let n = dot3(e1, e1).sqrt();
    e1.iter_mut().for_each(|x| *x /= n);
    let e2 = [v[1] * e1[2] - v[2] * e1[1], v[2] * e1[0] - v[0] * e1[2], v[0] * e1[1] - v[1] * e1[0]];
    (e1, e2)
}

fn exp_map(v: [f64; 3], e1: [f64; 3], e2: [f64; 3], rho: f64, alpha: f64) -> [f64; 3] {
    let (sr, cr) = rho.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    std::array::from_fn(|i| cr * v[i] + sr * (ca * e1[i] + sa * e2[i]))
}

fn sphere_gaussian_norm(sigma: f64) -> f64 {
    let s2 = 2.0 * sigma * sigma;
    2.0 * PI * quad::integrate(0.0, PI, 32, 16, |r| (-r * r / s2).exp() * r.sin())
}

const ANGULAR_NODES: usize = 256;

/// `∫_{B_R(c)} f` in polar coordinates, radial panels split at `breaks`.
fn planar_ball_integral(c: Point, radius: f64, breaks: &[f64], f: &(dyn Fn(Point) -> f64 + Sync)) -> f64 {
    let dth = 2.0 * PI / ANGULAR_NODES as f64;
    let mut pts: Vec<f64> = vec![0.0];
    pts.extend(breaks.iter().copied().filter(|b| *b > 0.0 && *b < radius));
    pts.push(radius);
    pts.sort_by(f64::total_cmp);
    // Sub-divide so that panels are not too wide.
    let mut edges = vec![pts[0]];
    for w in pts.windows(2) {
        let k = ((w[1] - w[0]) / (radius / 16.0)).ceil().max(1.0) as usize;
        for i in 1..=k {
            edges.push(w[0] + (w[1] - w[0]) * i as f64 / k as f64);
        }
    }
    edges
        .par_windows(2)
        .map(|w| {
            quad::integrate(w[0], w[1], 24, 1, |rho| {
                let mut s = 0.0;
                for a in 0..ANGULAR_NODES {
                    let th = (a as f64 + 0.5) * dth;
                    s += f([c[0] + rho * th.cos(), c[1] + rho * th.sin()]);
                }
                s * dth * rho
            })
        })
        .sum()
}

/// `∫_{cap(c, R)} f` in geodesic polar coordinates.
fn sphere_cap_integral(c: [f64; 3], radius: f64, breaks: &[f64], f: &(dyn Fn([f64; 3]) -> f64 + Sync)) -> f64 {
    let (e1, e2) = tangent_basis(c);
    let radius = radius.min(PI);
    let dth = 2.0 * PI / ANGULAR_NODES as f64;
    let mut edges: Vec<f64> = vec![0.0];
    edges.extend(breaks.iter().copied().filter(|b| *b > 0.0 && *b < radius));
    edges.push(radius);
    edges.sort_by(f64::total_cmp);
    let mut fine = vec![0.0];
    for w in edges.windows(2) {
        let k = ((w[1] - w[0]) / (PI / 32.0)).ceil().max(1.0) as usize;
        for i in 1..=k {
            fine.push(w[0] + (w[1] - w[0]) * i as f64 / k as f64);
        }
    }
    fine.par_windows(2)
        .map(|w| {
            quad::integrate(w[0], w[1], 24, 1, |rho| {
                let mut s = 0.0;
                for a in 0..ANGULAR_NODES {
                    s += f(exp_map(c, e1, e2, rho, (a as f64 + 0.5) * dth));
                }
                s * dth * rho.sin()
            })
        })
        .sum()
}

/// Area of `B_r1(0) ∩ B_r2(c)`.
fn disc_intersection_area(r1: f64, c: Point, r2: f64) -> f64 {
    let d = c[0].hypot(c[1]);
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    r1 * r1 * (a1 - a1.sin() * a1.cos()) + r2 * r2 * (a2 - a2.sin() * a2.cos())
}

impl AcDensity {
    fn validate(&self, surface: SurfaceKind) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(Error::Domain(msg.to_string())) };
        match self {
            AcDensity::Gaussian { sigma, mass, center } => {
                ok(center.iter().all(|v| v.is_finite()), "Gaussian centre must be finite")?;
                ok(*mass >= 0.0 && mass.is_finite(), "Gaussian mass must be finite and nonnegative")?;
                ok(
                    *sigma > 0.0 && sigma.is_finite(),
                    "Gaussian width must be positive; a zero-width Gaussian is atomic",
                )
            }
            AcDensity::Constant { value, radius } => {
                ok(*value >= 0.0 && value.is_finite(), "constant density must be finite and nonnegative")?;
                ok(radius.map_or(true, |r| r > 0.0), "constant density support radius must be positive")
            }
            AcDensity::Round { scale } => ok(*scale >= 0.0 && scale.is_finite(), "round scale must be nonnegative"),
            AcDensity::Table { spacing, nx, ny, values, .. } => {
                ok(surface != SurfaceKind::Sphere, "tabulated densities are planar only")?;
                ok(*nx >= 2 && *ny >= 2 && values.len() == nx * ny, "table needs nx·ny ≥ 4 values")?;
                ok(spacing.iter().all(|s| *s > 0.0), "table spacing must be positive")?;
                ok(values.iter().all(|v| *v >= 0.0 && v.is_finite()), "table values must be nonnegative")
            }
        }
    }

    /// Whether the component has finite total mass.
    pub fn finite_mass(&self, surface: SurfaceKind) -> bool {
        match (self, surface) {
            (AcDensity::Constant { value, radius: None }, SurfaceKind::Plane) => *value == 0.0,
            _ => true,
        }
    }

    fn scaled(&self, f: f64) -> Self {
        match self.clone() {
            AcDensity::Gaussian { center, sigma, mass } => AcDensity::Gaussian { center, sigma, mass: mass * f },
            AcDensity::Constant { value, radius } => AcDensity::Constant { value: value * f, radius },
            AcDensity::Round { scale } => AcDensity::Round { scale: scale * f },
            AcDensity::Table { origin, spacing, nx, ny, values } => AcDensity::Table {
                origin,
                spacing,
                nx,
                ny,
                values: values.iter().map(|v| v * f).collect(),
            },
        }
    }

    /// Density at a planar point (the disc clip is applied by the caller).
    fn planar(&self, x: Point) -> f64 {
        match self {
            AcDensity::Gaussian { center, sigma, mass } => {
                let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                mass / (2.0 * PI * sigma * sigma) * (-d2 / (2.0 * sigma * sigma)).exp()
            }
            AcDensity::Constant { value, radius } => match radius {
                Some(r) if x[0].hypot(x[1]) > *r => 0.0,
                _ => *value,
            },
            AcDensity::Round { scale } => scale * round_background(x),
            AcDensity::Table { origin, spacing, nx, ny, values } => {
                let fx = (x[0] - origin[0]) / spacing[0];
                let fy = (x[1] - origin[1]) / spacing[1];
                if fx < 0.0 || fy < 0.0 || fx > (nx - 1) as f64 || fy > (ny - 1) as f64 {
                    return 0.0;
                }
                let i = (fx.floor() as usize).min(nx - 2);
                let j = (fy.floor() as usize).min(ny - 2);
                let (a, b) = (fx - i as f64, fy - j as f64);
                let v = |i: usize, j: usize| values[j * nx + i];
                (1.0 - a) * (1.0 - b) * v(i, j)
                    + a * (1.0 - b) * v(i + 1, j)
                    + (1.0 - a) * b * v(i, j + 1)
                    + a * b * v(i + 1, j + 1)
            }
        }
    }

    fn sphere(&self, p: [f64; 3], gauss_norm: f64) -> f64 {
        match self {
            AcDensity::Gaussian { center, sigma, mass } => {
                let d = geodesic(p, sphere_point(*center));
                mass * (-d * d / (2.0 * sigma * sigma)).exp() / gauss_norm
            }
            AcDensity::Constant { value, radius } => match radius {
                Some(r) if p[2].clamp(-1.0, 1.0).acos() > *r => 0.0,
                _ => *value,
            },
            AcDensity::Round { scale } => *scale,
            AcDensity::Table { .. } => 0.0,
        }
    }

    /// Radii (about the origin) where the density has kinks or jumps.
    fn radial_breaks(&self) -> Vec<f64> {
        match self {
            AcDensity::Constant { radius: Some(r), .. } => vec![*r],
            _ => vec![],
        }
    }

    /// Radius of a ball about the origin outside which the density is negligible.
    fn extent(&self) -> f64 {
        match self {
            AcDensity::Gaussian { center, sigma, .. } => center[0].hypot(center[1]) + 9.0 * sigma,
            AcDensity::Constant { radius, .. } => radius.unwrap_or(10.0),
            AcDensity::Round { .. } => 10.0,
            AcDensity::Table { origin, spacing, nx, ny, .. } => {
                let far = [origin[0] + spacing[0] * (*nx - 1) as f64, origin[1] + spacing[1] * (*ny - 1) as f64];
                origin[0].hypot(origin[1]).max(far[0].hypot(far[1])).max(origin[0].hypot(far[1])).max(far[0].hypot(origin[1]))
            }
        }
    }
}

impl CurveMeasure {
    fn sphere_points(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| sphere_point(*p)).collect()
    }

    /// Segments as `(start, end, length)`; sphere segments are great-circle arcs.
    fn length(&self, surface: SurfaceKind) -> f64 {
        match surface {
            SurfaceKind::Sphere => self.sphere_points().windows(2).map(|w| geodesic(w[0], w[1])).sum(),
            _ => self.points.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum(),
        }
    }

    /// Samples `(position, weight)` with spacing at most `step`, weights summing to the length
    /// of the part kept by `keep` (midpoint rule).
    fn planar_samples(&self, step: f64) -> Vec<(Point, f64)> {
        let mut out = Vec::new();
        for w in self.points.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if len == 0.0 {
                continue;
            }
            let n = (len / step).ceil().max(1.0) as usize;
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                out.push(([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])], len / n as f64));
            }
        }
        out
    }

    fn sphere_samples(&self, step: f64) -> Vec<([f64; 3], f64)> {
        let mut out = Vec::new();
        for w in self.sphere_points().windows(2) {
            let len = geodesic(w[0], w[1]);
            if len == 0.0 {
                continue;
            }
            let n = (len / step).ceil().max(1.0) as usize;
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                out.push((slerp(w[0], w[1], len, t), len / n as f64));
            }
        }
        out
    }
}

fn slerp(a: [f64; 3], b: [f64; 3], angle: f64, t: f64) -> [f64; 3] {
    let s = angle.sin();
    let (wa, wb) = (((1.0 - t) * angle).sin() / s, (t * angle).sin() / s);
    std::array::from_fn(|i| wa * a[i] + wb * b[i])
}

/// Length of the part of segment `[a, b]` inside `B_r(c)`.
fn segment_in_ball(a: Point, b: Point, c: Point, r: f64) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let f = [a[0] - c[0], a[1] - c[1]];
    let qa = d[0] * d[0] + d[1] * d[1];
    if qa == 0.0 {
        return 0.0;
    }
    let qb = 2.0 * (f[0] * d[0] + f[1] * d[1]);
    let qc = f[0] * f[0] + f[1] * f[1] - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    let t0 = ((-qb - sq) / (2.0 * qa)).max(0.0);
    let t1 = ((-qb + sq) / (2.0 * qa)).min(1.0);
    (t1 - t0).max(0.0) * qa.sqrt()
}

/// Length of the part of the minor arc `[a, b]` inside the cap `{p : d(p, c) ≤ r}`.
fn arc_in_cap(a: [f64; 3], b: [f64; 3], c: [f64; 3], r: f64) -> f64 {
    let len = geodesic(a, b);
    if len == 0.0 {
        return 0.0;
    }
    // p(s) = a cos s + e sin s with e the unit tangent towards b.
    let d = dot3(a, b);
    let mut e: [f64; 3] = std::array::from_fn(|i| b[i] - d * a[i]);
    let n = dot3(e, e).sqrt();
    e.iter_mut().for_each(|x| *x /= n);
    let (p, q) = (dot3(a, c), dot3(e, c));
    let amp = p.hypot(q);
    let cr = r.min(PI).cos();
    if amp <= cr {
        return if cr < -amp { len } else { 0.0 };
    }
    let s0 = q.atan2(p);
    let w = (cr / amp).clamp(-1.0, 1.0).acos();
    let mut total = 0.0;
    for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
        let (lo, hi) = (s0 - w + shift, s0 + w + shift);
        total += (hi.min(len) - lo.max(0.0)).max(0.0);
    }
    total.min(len)
}

impl MeasureSpec {
    pub fn trivial(surface: SurfaceKind) -> Self {
        Self { surface, ac: None, curves: Vec::new() }
    }

    /// Parses and validates a JSON measure. Atomic components are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        reject_atoms(&value)?;
        let spec: MeasureSpec = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(ac) = &self.ac {
            ac.validate(self.surface)?;
        }
        for (i, c) in self.curves.iter().enumerate() {
            if !(c.density >= 0.0 && c.density.is_finite()) {
                return domain(format!("curve {i}: linear density must be finite and nonnegative"));
            }
            if c.points.len() < 2 {
                return domain(format!("curve {i}: a curve needs two points; single points would be atoms"));
            }
            match self.surface {
                SurfaceKind::Disc if c.points.iter().any(|p| p[0].hypot(p[1]) >= 1.0) => {
                    return domain(format!("curve {i} leaves the unit disc"));
                }
                SurfaceKind::Sphere => {
                    let pts = c.sphere_points();
                    if pts.windows(2).any(|w| geodesic(w[0], w[1]) > PI - 1e-9) {
                        return domain(format!("curve {i}: consecutive points are antipodal"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            surface: self.surface,
            ac: self.ac.as_ref().map(|a| a.scaled(factor)),
            curves: self
                .curves
                .iter()
                .map(|c| CurveMeasure { points: c.points.clone(), density: c.density * factor })
                .collect(),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.curves.iter().all(|c| c.density == 0.0 || c.length(self.surface) == 0.0)
            && self.ac.as_ref().map_or(true, |a| match a {
                AcDensity::Gaussian { mass, .. } => *mass == 0.0,
                AcDensity::Constant { value, .. } => *value == 0.0,
                AcDensity::Round { scale } => *scale == 0.0,
                AcDensity::Table { values, .. } => values.iter().all(|v| *v == 0.0),
            })
    }

    pub fn finite_mass(&self) -> bool {
        self.ac.as_ref().map_or(true, |a| a.finite_mass(self.surface))
    }

    fn gauss_norm(&self) -> f64 {
        match (&self.ac, self.surface) {
            (Some(AcDensity::Gaussian { sigma, .. }), SurfaceKind::Sphere) => sphere_gaussian_norm(*sigma),
            _ => 1.0,
        }
    }

    /// Density of the absolutely continuous part at a planar point.
    pub fn ac_density(&self, x: Point) -> f64 {
        if self.surface == SurfaceKind::Disc && x[0].hypot(x[1]) >= 1.0 {
            return 0.0;
        }
        self.ac.as_ref().map_or(0.0, |a| a.planar(x))
    }

    /// Density of the absolutely continuous part at a unit vector of the sphere.
    pub fn ac_density_sphere(&self, p: [f64; 3]) -> f64 {
        let norm = self.gauss_norm();
        self.ac.as_ref().map_or(0.0, |a| a.sphere(p, norm))
    }

    fn ac_mass(&self, region: Region) -> f64 {
        let Some(ac) = &self.ac else { return 0.0 };
        match self.surface {
            SurfaceKind::Sphere => {
                let norm = self.gauss_norm();
                let (c, r) = match region {
                    Region::Whole => match ac {
                        AcDensity::Gaussian { mass, .. } => return *mass,
                        AcDensity::Constant { value, radius: None } => return 4.0 * PI * value,
                        AcDensity::Constant { value, radius: Some(r) } => {
                            return 2.0 * PI * (1.0 - r.min(PI).cos()) * value
                        }
                        AcDensity::Round { scale } => return 4.0 * PI * scale,
                        AcDensity::Table { .. } => return 0.0,
                    },
                    Region::Ball { center, radius } => (sphere_point(center), radius),
                };
                let breaks: Vec<f64> = match ac {
                    AcDensity::Constant { radius: Some(rr), .. } => {
                        let d = c[2].clamp(-1.0, 1.0).acos();
                        vec![(rr - d).abs(), rr + d]
                    }
                    _ => vec![],
                };
                sphere_cap_integral(c, r, &breaks, &|p| ac.sphere(p, norm))
            }
            SurfaceKind::Plane | SurfaceKind::Disc => {
                let clip = if self.surface == SurfaceKind::Disc { 1.0 } else { f64::INFINITY };
                let (c, r) = match region {
                    Region::Whole if self.surface == SurfaceKind::Disc => ([0.0, 0.0], 1.0),
                    Region::Whole => {
                        return match ac {
                            AcDensity::Gaussian { mass, .. } => *mass,
                            AcDensity::Constant { value, radius: Some(r) } => PI * r * r * value,
                            AcDensity::Constant { value, radius: None } => {
                                if *value == 0.0 {
                                    0.0
                                } else {
                                    f64::INFINITY
                                }
                            }
                            AcDensity::Round { scale } => 4.0 * PI * scale,
                            AcDensity::Table { spacing, nx, ny, values, .. } => {
                                let mut s = 0.0;
                                for j in 0..*ny {
                                    for i in 0..*nx {
                                        let wi = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                                        let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                                        s += wi * wj * values[j * nx + i];
                                    }
                                }
                                s * spacing[0] * spacing[1]
                            }
                        };
                    }
                    Region::Ball { center, radius } => (center, radius),
                };
                let centred = c[0] == 0.0 && c[1] == 0.0;
                match ac {
                    AcDensity::Constant { value, radius } => {
                        let support = radius.unwrap_or(f64::INFINITY).min(clip);
                        if support.is_infinite() {
                            PI * r * r * value
                        } else {
                            value * disc_intersection_area(support, c, r)
                        }
                    }
                    AcDensity::Gaussian { center, sigma, mass }
                        if clip.is_infinite() && center[0] == c[0] && center[1] == c[1] =>
                    {
                        mass * (1.0 - (-r * r / (2.0 * sigma * sigma)).exp())
                    }
                    AcDensity::Round { scale } if clip.is_infinite() && centred => 4.0 * PI * scale * r * r / (1.0 + r * r),
                    _ => {
                        let mut breaks = ac.radial_breaks();
                        if centred && clip.is_finite() {
                            breaks.push(clip);
                        }
                        planar_ball_integral(c, r, &breaks, &|x| self.ac_density(x))
                    }
                }
            }
        }
    }

    fn curve_mass(&self, region: Region) -> f64 {
        self.curves
            .iter()
            .map(|cv| {
                let len = match region {
                    Region::Whole => cv.length(self.surface),
                    Region::Ball { center, radius } => match self.surface {
                        SurfaceKind::Sphere => {
                            let c = sphere_point(center);
                            cv.sphere_points().windows(2).map(|w| arc_in_cap(w[0], w[1], c, radius)).sum()
                        }
                        _ => cv.points.windows(2).map(|w| segment_in_ball(w[0], w[1], center, radius)).sum(),
                    },
                };
                cv.density * len
            })
            .sum()
    }
}

fn reject_atoms(value: &serde_json::Value) -> Result<()> {
    const ATOMIC: [&str; 5] = ["dirac", "point", "atom", "delta", "point_mass"];
    let bad = |v: &serde_json::Value| {
        v.get("kind").and_then(|k| k.as_str()).map_or(false, |k| ATOMIC.contains(&k.to_ascii_lowercase().as_str()))
    };
    if value.get("ac").map_or(false, bad) {
        return Err(Error::Parse("atomic measures are not admissible: point masses have μ({x}) > 0".into()));
    }
    for key in ["atoms", "points", "point_masses", "diracs"] {
        if value.get(key).is_some() {
            return Err(Error::Parse(format!("atomic measures are not admissible: found `{key}`")));
        }
    }
    Ok(())
}

/// Mass of `μ` in a region.
pub fn total_mass(mu: &MeasureSpec, region: Region) -> f64 {
    mu.ac_mass(region) + mu.curve_mass(region)
}

/// Compactly supported continuous test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Zero,
    /// `(1 − d²/r²)³` for distance `d < r` from the centre.
    Bump { center: [f64; 2], radius: f64 },
    /// `1` on `B_inner`, a `C²` quintic ramp down to `0` at `outer`.
    Cutoff { center: [f64; 2], inner: f64, outer: f64 },
    /// Constant function; compactly supported only on the closed sphere.
    Constant { value: f64 },
}

impl TestFunction {
    fn profile(&self, d: f64) -> f64 {
        match *self {
            TestFunction::Zero => 0.0,
            TestFunction::Bump { radius, .. } => {
                let q = d / radius;
                if q >= 1.0 {
                    0.0
                } else {
                    (1.0 - q * q).powi(3)
                }
            }
            TestFunction::Cutoff { inner, outer, .. } => {
                if d <= inner {
                    1.0
                } else if d >= outer {
                    0.0
                } else {
                    let s = (d - inner) / (outer - inner);
                    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
                }
            }
            TestFunction::Constant { value } => value,
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            TestFunction::Bump { center, .. } | TestFunction::Cutoff { center, .. } => {
                self.profile((x[0] - center[0]).hypot(x[1] - center[1]))
            }
            _ => self.profile(0.0),
        }
    }

    pub fn eval_sphere(&self, p: [f64; 3]) -> f64 {
        match self {
            TestFunction::Bump { center, .. } | TestFunction::Cutoff { center, .. } => {
                self.profile(geodesic(p, sphere_point(*center)))
            }
            _ => self.profile(0.0),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            TestFunction::Zero => 0.0,
            TestFunction::Constant { value } => value.abs(),
            _ => 1.0,
        }
    }

    /// Supporting ball `(centre, radius)`, or `None` for the constant.
    pub fn support(&self) -> Option<([f64; 2], f64)> {
        match *self {
            TestFunction::Zero => Some(([0.0, 0.0], 0.0)),
            TestFunction::Bump { center, radius } => Some((center, radius)),
            TestFunction::Cutoff { center, outer, .. } => Some((center, outer)),
            TestFunction::Constant { .. } => None,
        }
    }

    fn breaks(&self) -> Vec<f64> {
        match *self {
            TestFunction::Cutoff { inner, .. } => vec![inner],
            _ => vec![],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFunction::Bump { radius, .. } => radius > 0.0,
            TestFunction::Cutoff { inner, outer, .. } => inner >= 0.0 && outer > inner,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            domain(format!("malformed test function {self:?}"))
        }
    }
}

/// `∫ ψ dμ`.
pub fn pair(mu: &MeasureSpec, psi: &TestFunction) -> Result<f64> {
    psi.validate()?;
    if *psi == TestFunction::Zero {
        return Ok(0.0);
    }
    let support = psi.support();
    if support.is_none() && mu.surface == SurfaceKind::Plane {
        return Err(Error::Precondition("test function is not compactly supported on the plane".into()));
    }
    let mut ac = 0.0;
    if mu.ac.is_some() {
        ac = match mu.surface {
            SurfaceKind::Sphere => {
                let (c, r) = support.map_or(([0.0, 0.0], PI), |s| s);
                let mut breaks = psi.breaks();
                if let Some(AcDensity::Constant { radius: Some(rr), .. }) = &mu.ac {
                    let d = c[0];
                    breaks.extend([(rr - d).abs(), rr + d]);
                }
                sphere_cap_integral(sphere_point(c), r, &breaks, &|p| psi.eval_sphere(p) * mu.ac_density_sphere(p))
            }
            _ => {
                let (c, r) = support.map_or(([0.0, 0.0], 1.0), |s| s);
                let mut breaks = psi.breaks();
                let centred = c == [0.0, 0.0];
                if centred {
                    breaks.extend(mu.ac.as_ref().map(|a| a.radial_breaks()).unwrap_or_default());
                    if mu.surface == SurfaceKind::Disc {
                        breaks.push(1.0);
                    }
                }
                planar_ball_integral(c, r, &breaks, &|x| psi.eval(x) * mu.ac_density(x))
            }
        };
    }
    let mut curves = 0.0;
    for cv in &mu.curves {
        let len = cv.length(mu.surface);
        if len == 0.0 || cv.density == 0.0 {
            continue;
        }
        let scale = support.map_or(1.0, |s| s.1.max(1e-3));
        let step = scale / 16.0;
        let line: f64 = match mu.surface {
            SurfaceKind::Sphere => cv
                .sphere_points()
                .windows(2)
                .map(|w| {
                    let l = geodesic(w[0], w[1]);
                    let n = (l / step).ceil().max(1.0) as usize;
                    quad::integrate(0.0, 1.0, 8, n, |t| psi.eval_sphere(slerp(w[0], w[1], l, t))) * l
                })
                .sum(),
            _ => cv
                .points
                .windows(2)
                .map(|w| {
                    let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                    let n = (l / step).ceil().max(1.0) as usize;
                    quad::integrate(0.0, 1.0, 8, n, |t| {
                        psi.eval([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])])
                    }) * l
                })
                .sum(),
        };
        curves += cv.density * line;
    }
    Ok(ac + curves)
}

/// Radial mollifier profile on `[0, 1]`, zero beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mollifier {
    /// `(1 − q²)³`.
    #[default]
    Bump,
    /// `exp(−q²/(2·(1/3)²)) − exp(−9/2)`.
    TruncatedGaussian,
}

impl Mollifier {
    pub fn profile(&self, q: f64) -> f64 {
        if q >= 1.0 {
            return 0.0;
        }
        match self {
            Mollifier::Bump => (1.0 - q * q).powi(3),
            Mollifier::TruncatedGaussian => (-4.5 * q * q).exp() - (-4.5f64).exp(),
        }
    }

    /// `∫_{B_1} profile(|z|) dz`.
    pub fn planar_mass(&self) -> f64 {
        match self {
            Mollifier::Bump => PI / 4.0,
            Mollifier::TruncatedGaussian => 2.0 * PI * ((1.0 - (-4.5f64).exp()) / 9.0 - 0.5 * (-4.5f64).exp()),
        }
    }
}

/// The smoothing `g_h(μ)` of a measure, evaluable anywhere on its surface.
#[derive(Debug, Clone)]
pub struct SmoothedMetric {
    measure: MeasureSpec,
    h: f64,
    kernel: Mollifier,
    /// Radius of the restriction ball (planar charts).
    restrict: f64,
    total_mass: f64,
    planar_curve_samples: Vec<(Point, f64)>,
    sphere_curve_samples: Vec<([f64; 3], f64)>,
    /// Relative offsets and weights of the ac mollification quadrature.
    stencil: Vec<(f64, f64, f64)>,
    sphere_kernel_norm: f64,
}

const STENCIL_RADIAL: usize = 8;
const STENCIL_ANGULAR: usize = 16;

/// Smoothing map `g_h(μ)` with the default bump mollifier.
pub fn smooth(mu: &MeasureSpec, h: f64) -> Result<SmoothedMetric> {
    smooth_with(mu, h, Mollifier::Bump)
}

/// Smoothing map `g_h(μ)`.
///
/// Plane: `μ|B_{1/h}` mollified at scale `h`, plus `h` times the round metric.
/// Disc: `μ|B_{1−2h}` mollified, plus `h`. Sphere: `(1−h)` times the geodesic
/// mollification plus `h` times the uniform density of the same mass.
pub fn smooth_with(mu: &MeasureSpec, h: f64, kernel: Mollifier) -> Result<SmoothedMetric> {
    mu.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return domain(format!("smoothing scale must be positive, got {h}"));
    }
    let restrict = match mu.surface {
        SurfaceKind::Plane => 1.0 / h,
        SurfaceKind::Disc => {
            if h >= 0.5 {
                return domain(format!("disc smoothing needs h < 1/2, got {h}"));
            }
            1.0 - 2.0 * h
        }
        SurfaceKind::Sphere => {
            if h >= 1.0 {
                return domain(format!("sphere smoothing needs h < 1, got {h}"));
            }
            PI
        }
    };
    let total_mass = match mu.surface {
        SurfaceKind::Sphere => total_mass(mu, Region::Whole),
        _ => total_mass(mu, Region::Ball { center: [0.0, 0.0], radius: restrict }),
    };
    if mu.surface == SurfaceKind::Sphere && !(total_mass > 0.0) {
        return domain("the trivial measure on the sphere has no conformal smoothing");
    }
    if !total_mass.is_finite() {
        return domain("smoothing needs finite mass on the restriction ball");
    }
    let step = h / 4.0;
    let (mut planar_curve_samples, mut sphere_curve_samples) = (Vec::new(), Vec::new());
    for cv in &mu.curves {
        if cv.density == 0.0 {
            continue;
        }
        match mu.surface {
            SurfaceKind::Sphere => {
                sphere_curve_samples.extend(cv.sphere_samples(step).into_iter().map(|(p, w)| (p, w * cv.density)))
            }
            _ => planar_curve_samples.extend(
                cv.planar_samples(step)
                    .into_iter()
                    .filter(|(p, _)| p[0].hypot(p[1]) < restrict)
                    .map(|(p, w)| (p, w * cv.density)),
            ),
        }
    }
    let rule = quad::gauss_legendre(STENCIL_RADIAL);
    let mut stencil = Vec::with_capacity(STENCIL_RADIAL * STENCIL_ANGULAR);
    for &(x, w) in rule.iter() {
        let rho = 0.5 * h * (x + 1.0);
        let radial = if mu.surface == SurfaceKind::Sphere { rho.sin() } else { rho };
        for a in 0..STENCIL_ANGULAR {
            let alpha = 2.0 * PI * (a as f64 + 0.5 * (x + 1.0)) / STENCIL_ANGULAR as f64;
            stencil.push((rho, alpha, w * radial * kernel.profile(rho / h)));
        }
    }
    let norm: f64 = stencil.iter().map(|s| s.2).sum();
    stencil.iter_mut().for_each(|s| s.2 /= norm);
    let sphere_kernel_norm =
        2.0 * PI * quad::integrate(0.0, h, 16, 4, |r| r.sin() * kernel.profile(r / h));
    Ok(SmoothedMetric {
        measure: mu.clone(),
        h,
        kernel,
        restrict,
        total_mass,
        planar_curve_samples,
        sphere_curve_samples,
        stencil,
        sphere_kernel_norm,
    })
}

impl SmoothedMetric {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> Mollifier {
        self.kernel
    }

    pub fn surface(&self) -> SurfaceKind {
        self.measure.surface
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    /// Total volume of the smoothed metric.
    pub fn total_volume(&self) -> f64 {
        match self.measure.surface {
            SurfaceKind::Plane => self.total_mass + 4.0 * PI * self.h,
            SurfaceKind::Disc => self.total_mass + PI * self.h,
            SurfaceKind::Sphere => self.total_mass,
        }
    }

    fn restricted_density(&self, y: Point) -> f64 {
        if y[0].hypot(y[1]) >= self.restrict {
            0.0
        } else {
            self.measure.ac_density(y)
        }
    }

    /// Conformal factor against `dx²` at a planar point.
    pub fn density_at(&self, x: Point) -> f64 {
        let mut v = 0.0;
        if self.measure.ac.is_some() {
            for &(rho, alpha, w) in &self.stencil {
                v += w * self.restricted_density([x[0] + rho * alpha.cos(), x[1] + rho * alpha.sin()]);
            }
        }
        let scale = 1.0 / (self.h * self.h * self.kernel.planar_mass());
        for (p, m) in &self.planar_curve_samples {
            let d = (x[0] - p[0]).hypot(x[1] - p[1]);
            if d < self.h {
                v += m * scale * self.kernel.profile(d / self.h);
            }
        }
        v + match self.measure.surface {
            SurfaceKind::Plane => self.h * round_background(x),
            _ => self.h,
        }
    }

    /// Conformal factor against the round metric at a unit vector.
    pub fn density_at_sphere(&self, p: [f64; 3]) -> f64 {
        let mut v = 0.0;
        if self.measure.ac.is_some() {
            let (e1, e2) = tangent_basis(p);
            let norm = self.measure.gauss_norm();
            let ac = self.measure.ac.as_ref().expect("checked above");
            for &(rho, alpha, w) in &self.stencil {
                v += w * ac.sphere(exp_map(p, e1, e2, rho, alpha), norm);
            }
        }
        let ch = self.h.cos();
        for (q, m) in &self.sphere_curve_samples {
            let c = dot3(p, *q);
            if c > ch {
                v += m * self.kernel.profile(geodesic(p, *q) / self.h) / self.sphere_kernel_norm;
            }
        }
        (1.0 - self.h) * v + self.h * self.total_mass / (4.0 * PI)
    }

    /// Samples the factor on a chart: against `dx²` on Cartesian charts,
    /// `ds² + dθ²` on log-polar charts and the round metric on the sphere.
    pub fn sample(&self, grid: &ChartGrid) -> Result<ConformalField> {
        let values: Vec<f64> = match (grid, self.measure.surface) {
            (ChartGrid::Sphere(g), SurfaceKind::Sphere) => {
                (0..g.len()).into_par_iter().map(|i| self.density_at_sphere(g.unit_vector(i))).collect()
            }
            (ChartGrid::Cartesian(g), SurfaceKind::Plane | SurfaceKind::Disc) => {
                (0..g.len()).into_par_iter().map(|k| self.density_at(g.point(k))).collect()
            }
            (ChartGrid::LogPolar(g), SurfaceKind::Plane) => (0..g.len())
                .into_par_iter()
                .map(|k| {
                    let x = g.point(k);
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    let mut ac = self.density_at(x) - self.h * round_background(x);
                    if ac < 0.0 {
                        ac = 0.0;
                    }
                    // Add-on term written to stay representable at huge radii.
                    ac * r2 + self.h * 4.0 * r2 / ((1.0 + r2) * (1.0 + r2))
                })
                .collect(),
            (g, s) => {
                return Err(Error::Precondition(format!(
                    "cannot sample a {s} measure on chart {}",
                    match g {
                        ChartGrid::Cartesian(_) => "cartesian",
                        ChartGrid::LogPolar(_) => "log-polar",
                        ChartGrid::Sphere(_) => "sphere",
                    }
                )))
            }
        };
        ConformalField::new(values)
    }
}

/// Sufficient test for `ν₁ ≤ ν₂`: ordered ac densities at reference nodes and
/// curve components of `ν₁` carried by curves of `ν₂` with larger density.
pub fn is_leq(nu1: &MeasureSpec, nu2: &MeasureSpec) -> bool {
    if nu1.surface != nu2.surface {
        return false;
    }
    ac_leq(nu1, nu2) && curves_leq(nu1, nu2)
}

fn ac_leq(nu1: &MeasureSpec, nu2: &MeasureSpec) -> bool {
    let (a1, a2) = match (&nu1.ac, &nu2.ac) {
        (None, _) => return true,
        (Some(a1), a2) => (a1, a2),
    };
    if let Some(a2) = a2 {
        match (a1, a2) {
            (
                AcDensity::Gaussian { center: c1, sigma: s1, mass: m1 },
                AcDensity::Gaussian { center: c2, sigma: s2, mass: m2 },
            ) if c1 == c2 && s1 == s2 => return m1 <= m2,
            (AcDensity::Constant { value: v1, radius: r1 }, AcDensity::Constant { value: v2, radius: r2 }) => {
                let inside = match (r1, r2) {
                    (_, None) => true,
                    (Some(r1), Some(r2)) => r1 <= r2,
                    (None, Some(_)) => false,
                };
                return *v1 == 0.0 || (v1 <= v2 && inside);
            }
            _ => {}
        }
    }
    let d2 = |f: &dyn Fn(&MeasureSpec) -> f64| f(nu2);
    match nu1.surface {
        SurfaceKind::Sphere => {
            let g = SphereGrid::new(48);
            (0..g.len()).all(|i| {
                let p = g.unit_vector(i);
                nu1.ac_density_sphere(p) <= d2(&|m| m.ac_density_sphere(p)) * (1.0 + 1e-12)
            })
        }
        _ => {
            let extent = a1.extent().max(nu2.ac.as_ref().map_or(0.0, |a| a.extent()));
            let extent = if nu1.surface == SurfaceKind::Disc { 1.0 } else { extent };
            let n = 240;
            (0..=n).all(|j| {
                (0..=n).all(|i| {
                    let x = [-extent + 2.0 * extent * i as f64 / n as f64, -extent + 2.0 * extent * j as f64 / n as f64];
                    nu1.ac_density(x) <= d2(&|m| m.ac_density(x)) * (1.0 + 1e-12)
                })
            })
        }
    }
}

fn curves_leq(nu1: &MeasureSpec, nu2: &MeasureSpec) -> bool {
    let on_curve = |spec: &MeasureSpec, cv: &CurveMeasure, p: Point| -> bool {
        match spec.surface {
            SurfaceKind::Sphere => {
                let q = sphere_point(p);
                cv.sphere_points().windows(2).any(|w| {
                    (geodesic(w[0], q) + geodesic(q, w[1]) - geodesic(w[0], w[1])).abs() < 1e-9
                })
            }
            _ => cv.points.windows(2).any(|w| {
                let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                let a = (p[0] - w[0][0]).hypot(p[1] - w[0][1]);
                let b = (p[0] - w[1][0]).hypot(p[1] - w[1][1]);
                (a + b - l).abs() < 1e-9 * (1.0 + l)
            }),
        }
    };
    let line_density = |spec: &MeasureSpec, p: Point| -> f64 {
        spec.curves.iter().filter(|c| on_curve(spec, c, p)).map(|c| c.density).sum()
    };
    for cv in nu1.curves.iter().filter(|c| c.density > 0.0) {
        for w in cv.points.windows(2) {
            for k in 0..=64 {
                let t = k as f64 / 64.0;
                let p = if nu1.surface == SurfaceKind::Sphere {
                    let (a, b) = (sphere_point(w[0]), sphere_point(w[1]));
                    let q = slerp(a, b, geodesic(a, b), t);
                    [q[2].clamp(-1.0, 1.0).acos(), q[1].atan2(q[0])]
                } else {
                    [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]
                };
                if line_density(nu1, p) > line_density(nu2, p) * (1.0 + 1e-12) {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CartesianGrid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gaussian(mass: f64, center: [f64; 2]) -> MeasureSpec {
        MeasureSpec {
            surface: SurfaceKind::Plane,
            ac: Some(AcDensity::Gaussian { center, sigma: 1.0, mass }),
            curves: vec![],
        }
    }

    #[test]
    fn json_round_trip_and_atom_rejection() {
        let text = r#"{"surface":"plane","ac":{"kind":"gaussian","center":[0,0],"sigma":1,"mass":12.566},
                      "curves":[{"points":[[0,0],[1,0]],"density":2}]}"#;
        let mu = MeasureSpec::from_json(text).unwrap();
        let back = MeasureSpec::from_json(&serde_json::to_string(&mu).unwrap()).unwrap();
        assert_eq!(mu, back);
        let atom = r#"{"surface":"plane","ac":{"kind":"dirac","center":[0,0],"mass":1}}"#;
        assert!(matches!(MeasureSpec::from_json(atom), Err(Error::Parse(_))));
        let zero_width = r#"{"surface":"plane","ac":{"kind":"gaussian","center":[0,0],"sigma":0,"mass":1}}"#;
        assert!(MeasureSpec::from_json(zero_width).is_err());
        let single = r#"{"surface":"plane","curves":[{"points":[[0,0]],"density":1}]}"#;
        assert!(MeasureSpec::from_json(single).is_err());
    }

    #[test]
    fn mass_examples() {
        let triv = MeasureSpec::trivial(SurfaceKind::Plane);
        assert_eq!(total_mass(&triv, Region::Whole), 0.0);
        let round = MeasureSpec { surface: SurfaceKind::Plane, ac: Some(AcDensity::Round { scale: 1.0 }), curves: vec![] };
        assert_relative_eq!(total_mass(&round, Region::Whole), 4.0 * PI);
        // Off-centre ball forces the generic quadrature; compare with the
        // closed form of the centred ball of the same radius at the origin.
        let ball = total_mass(&round, Region::Ball { center: [1e-300, 0.0], radius: 3.0 });
        assert_relative_eq!(ball, 4.0 * PI * 9.0 / 10.0, max_relative = 1e-9);
        let seg = MeasureSpec {
            surface: SurfaceKind::Plane,
            ac: None,
            curves: vec![CurveMeasure { points: vec![[-1.0, 0.0], [1.0, 0.0]], density: 1.0 }],
        };
        assert_relative_eq!(total_mass(&seg, Region::Ball { center: [0.0, 0.0], radius: 5.0 }), 2.0);
        assert_relative_eq!(total_mass(&seg, Region::Ball { center: [1.0, 0.0], radius: 0.5 }), 0.5);
    }

    #[test]
    fn gaussian_ball_mass_by_two_routes() {
        let mu = gaussian(3.0, [0.4, -0.2]);
        let closed = total_mass(&mu, Region::Ball { center: [0.4, -0.2], radius: 1.3 });
        assert_relative_eq!(closed, 3.0 * (1.0 - (-1.3f64 * 1.3 / 2.0).exp()), max_relative = 1e-14);
        let quad = planar_ball_integral([0.4, -0.2], 1.3, &[], &|x| mu.ac_density(x));
        assert_relative_eq!(closed, quad, max_relative = 1e-10);
    }

    #[test]
    fn sphere_masses() {
        let round = MeasureSpec { surface: SurfaceKind::Sphere, ac: Some(AcDensity::Round { scale: 1.0 }), curves: vec![] };
        assert_relative_eq!(total_mass(&round, Region::Whole), 4.0 * PI);
        let cap = total_mass(&round, Region::Ball { center: [0.3, 1.0], radius: 0.5 });
        assert_relative_eq!(cap, 2.0 * PI * (1.0 - 0.5f64.cos()), max_relative = 1e-10);
        let g = MeasureSpec {
            surface: SurfaceKind::Sphere,
            ac: Some(AcDensity::Gaussian { center: [1.0, 2.0], sigma: 0.4, mass: 2.0 }),
            curves: vec![],
        };
        let all = total_mass(&g, Region::Ball { center: [1.0, 2.0], radius: PI });
        assert_relative_eq!(all, 2.0, max_relative = 1e-9);
        let equator = MeasureSpec {
            surface: SurfaceKind::Sphere,
            ac: None,
            curves: vec![CurveMeasure { points: vec![[PI / 2.0, 0.0], [PI / 2.0, 1.0]], density: 3.0 }],
        };
        assert_relative_eq!(total_mass(&equator, Region::Whole), 3.0, max_relative = 1e-12);
        let half = total_mass(&equator, Region::Ball { center: [PI / 2.0, 0.0], radius: 0.25 });
        assert_relative_eq!(half, 0.75, max_relative = 1e-9);
    }

    #[test]
    fn pair_examples() {
        let mu = gaussian(2.0, [0.0, 0.0]);
        assert_eq!(pair(&mu, &TestFunction::Zero).unwrap(), 0.0);
        let cut = TestFunction::Cutoff { center: [0.0, 0.0], inner: 5.0, outer: 6.0 };
        // Tail beyond 5σ is 2·e^{−12.5} ≈ 7e−6.
        assert_relative_eq!(pair(&mu, &cut).unwrap(), 2.0, max_relative = 1e-5);
        assert!(pair(&mu, &TestFunction::Constant { value: 1.0 }).is_err());
        let seg = MeasureSpec {
            surface: SurfaceKind::Disc,
            ac: Some(AcDensity::Constant { value: 1.0, radius: Some(0.5) }),
            curves: vec![CurveMeasure { points: vec![[-0.5, 0.1], [0.5, 0.1]], density: 1.0 }],
        };
        let one = pair(&seg, &TestFunction::Cutoff { center: [0.0, 0.0], inner: 0.6, outer: 0.9 }).unwrap();
        assert_relative_eq!(one, total_mass(&seg, Region::Whole), max_relative = 1e-10);
        assert_relative_eq!(one, PI * 0.25 + 1.0, max_relative = 1e-10);
    }

    #[test]
    fn smoothing_of_trivial_measures() {
        let s = smooth(&MeasureSpec::trivial(SurfaceKind::Plane), 0.1).unwrap();
        for x in [[0.0, 0.0], [1.0, 2.0], [30.0, 0.0]] {
            assert_relative_eq!(s.density_at(x), 0.1 * round_background(x), max_relative = 1e-15);
        }
        assert_relative_eq!(s.total_volume(), 0.4 * PI);
        let d = smooth(&MeasureSpec::trivial(SurfaceKind::Disc), 0.2).unwrap();
        assert_relative_eq!(d.density_at([0.3, 0.3]), 0.2);
        assert_relative_eq!(d.total_volume(), 0.2 * PI);
        assert!(smooth(&MeasureSpec::trivial(SurfaceKind::Disc), 0.5).is_err());
        assert!(smooth(&MeasureSpec::trivial(SurfaceKind::Sphere), 0.1).is_err());
    }

    #[test]
    fn mollifier_normalizations_match_quadrature() {
        for k in [Mollifier::Bump, Mollifier::TruncatedGaussian] {
            let q = quad::integrate(0.0, 1.0, 32, 4, |r| 2.0 * PI * r * k.profile(r));
            assert_relative_eq!(q, k.planar_mass(), max_relative = 1e-12);
        }
    }

    #[test]
    fn smoothing_converges_weakly() {
        let mu = gaussian(4.0 * PI, [0.0, 0.0]);
        let psi = TestFunction::Bump { center: [0.5, 0.0], radius: 1.5 };
        let target = pair(&mu, &psi).unwrap();
        let mut errs = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let s = smooth(&mu, h).unwrap();
            let got = planar_ball_integral([0.5, 0.0], 1.5, &[], &|x| psi.eval(x) * s.density_at(x));
            errs.push((got - target).abs());
            let kept = total_mass(&mu, Region::Ball { center: [0.0, 0.0], radius: 1.0 / h });
            assert_relative_eq!(s.total_volume(), kept + 4.0 * PI * h, max_relative = 1e-12);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn curve_smoothing_preserves_mass() {
        let mu = MeasureSpec {
            surface: SurfaceKind::Disc,
            ac: None,
            curves: vec![CurveMeasure { points: vec![[-0.3, 0.0], [0.3, 0.2]], density: 2.0 }],
        };
        let h = 0.05;
        let s = smooth(&mu, h).unwrap();
        let g = CartesianGrid::new(1.0, 400).unwrap();
        let dx2 = g.spacing().powi(2);
        let vol: f64 = (0..g.len()).map(|k| s.density_at(g.point(k)) - h).sum::<f64>() * dx2;
        assert_relative_eq!(vol, total_mass(&mu, Region::Whole), max_relative = 1e-3);
    }

    #[test]
    fn sphere_smoothing_keeps_round_data_and_mass() {
        let round = MeasureSpec { surface: SurfaceKind::Sphere, ac: Some(AcDensity::Round { scale: 1.0 }), curves: vec![] };
        let s = smooth(&round, 0.1).unwrap();
        let g = ChartGrid::from(SphereGrid::new(16));
        let f = s.sample(&g).unwrap();
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
        let cv = MeasureSpec {
            surface: SurfaceKind::Sphere,
            ac: Some(AcDensity::Gaussian { center: [0.5, 0.5], sigma: 0.3, mass: 2.0 }),
            curves: vec![CurveMeasure { points: vec![[1.0, 0.0], [1.2, 0.8]], density: 1.0 }],
        };
        let s = smooth(&cv, 0.1).unwrap();
        let ChartGrid::Sphere(sg) = ChartGrid::from(SphereGrid::new(96)) else { unreachable!() };
        let vals: Vec<f64> = (0..sg.len()).map(|i| s.density_at_sphere(sg.unit_vector(i))).collect();
        assert_relative_eq!(sg.integrate(&vals), total_mass(&cv, Region::Whole), max_relative = 2e-3);
    }

    #[test]
    fn ordering_examples() {
        let mu = gaussian(2.0, [0.0, 0.0]);
        assert!(is_leq(&mu, &mu));
        assert!(is_leq(&mu.scaled(0.5), &mu));
        assert!(!is_leq(&mu, &mu.scaled(0.5)));
        assert!(!is_leq(&gaussian(2.0, [1.0, 0.0]), &mu));
        assert!(!is_leq(&mu, &gaussian(2.0, [1.0, 0.0])));
        let wide = MeasureSpec {
            surface: SurfaceKind::Plane,
            ac: Some(AcDensity::Gaussian { center: [0.0, 0.0], sigma: 2.0, mass: 0.1 }),
            curves: vec![],
        };
        assert!(!is_leq(&wide, &mu), "tails of a wider Gaussian dominate");
        let c = |d: f64| MeasureSpec {
            surface: SurfaceKind::Plane,
            ac: None,
            curves: vec![CurveMeasure { points: vec![[0.0, 0.0], [1.0, 1.0]], density: d }],
        };
        let sub = MeasureSpec {
            surface: SurfaceKind::Plane,
            ac: None,
            curves: vec![CurveMeasure { points: vec![[0.2, 0.2], [0.5, 0.5]], density: 1.0 }],
        };
        assert!(is_leq(&sub, &c(1.0)));
        assert!(!is_leq(&c(1.0), &sub));
        assert!(!is_leq(&c(2.0), &c(1.0)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn smoothing_is_monotone(m in 0.1f64..10.0, frac in 0.0f64..1.0, cx in -1.0f64..1.0, h in 0.05f64..0.3) {
            let big = MeasureSpec {
                surface: SurfaceKind::Plane,
                ac: Some(AcDensity::Gaussian { center: [cx, 0.0], sigma: 0.7, mass: m }),
                curves: vec![CurveMeasure { points: vec![[-1.0, 0.3], [1.0, 0.3]], density: m }],
            };
            let small = big.scaled(frac);
            prop_assert!(is_leq(&small, &big));
            let (a, b) = (smooth(&small, h).unwrap(), smooth(&big, h).unwrap());
            for k in 0..50 {
                let x = [-2.0 + 0.08 * k as f64, 0.3 + 0.01 * k as f64];
                prop_assert!(a.density_at(x) <= b.density_at(x) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn pairing_bounded_by_mass(cx in -2.0f64..2.0, r in 0.2f64..3.0, m in 0.0f64..5.0) {
            let mu = MeasureSpec {
                surface: SurfaceKind::Plane,
                ac: Some(AcDensity::Gaussian { center: [0.3, 0.1], sigma: 0.8, mass: m }),
                curves: vec![CurveMeasure { points: vec![[-1.0, -1.0], [1.0, 0.5]], density: 1.0 }],
            };
            let psi = TestFunction::Bump { center: [cx, 0.0], radius: r };
            let p = pair(&mu, &psi).unwrap();
            let bound = total_mass(&mu, Region::Ball { center: [cx, 0.0], radius: r });
            prop_assert!(p.abs() <= bound * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn shrinking_balls_carry_no_mass(cx in -1.0f64..1.0, cy in -1.0f64..1.0) {
            let mu = MeasureSpec {
                surface: SurfaceKind::Plane,
                ac: Some(AcDensity::Gaussian { center: [0.0, 0.0], sigma: 1.0, mass: 3.0 }),
                curves: vec![CurveMeasure { points: vec![[-1.0, 0.0], [1.0, 0.0]], density: 5.0 }],
            };
            let masses: Vec<f64> = [0.1, 0.01, 0.001]
                .iter()
                .map(|r| total_mass(&mu, Region::Ball { center: [cx, cy], radius: *r }))
                .collect();
            prop_assert!(masses[2] <= masses[1] && masses[1] <= masses[0]);
            prop_assert!(masses[2] <= 5.0 * 0.002 + 3.0 * 1e-6);
        }
    }
}
