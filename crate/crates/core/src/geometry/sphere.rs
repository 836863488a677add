use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Spherical-harmonic coefficients `a_ℓm`, `0 ≤ m ≤ ℓ ≤ L`, of a real field.
///
/// Orthonormal harmonics without the Condon–Shortley phase; negative orders
/// follow from `a_{ℓ,−m} = conj(a_ℓm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    degree: usize,
    data: Vec<Complex64>,
}

fn tri_index(degree: usize, l: usize, m: usize) -> usize {
    // Σ_{m'<m} (L + 1 − m') = m(L+1) − m(m−1)/2
    m * (degree + 1) - m * m.saturating_sub(1) / 2 + (l - m)
}

fn tri_len(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

impl SpectralCoeffs {
    pub fn zeros(degree: usize) -> Self {
        Self { degree, data: vec![Complex64::new(0.0, 0.0); tri_len(degree)] }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn get(&self, l: usize, m: usize) -> Complex64 {
        self.data[tri_index(self.degree, l, m)]
    }

    pub fn set(&mut self, l: usize, m: usize, v: Complex64) {
        let k = tri_index(self.degree, l, m);
        self.data[k] = v;
    }

    /// Multiplies every coefficient by `f(ℓ)`.
    pub fn scale_by_degree(&mut self, f: impl Fn(usize) -> f64) {
        for m in 0..=self.degree {
            for l in m..=self.degree {
                let k = tri_index(self.degree, l, m);
                self.data[k] *= f(l);
            }
        }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Plans {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Plans")
    }
}

/// Gauss–Legendre × uniform-longitude grid with spherical-harmonic transforms
/// up to degree `L`.
///
/// Nodes are ordered latitude-major, north to south, `index = j·n_lon + k`.
#[derive(Debug)]
pub struct SphereGrid {
    degree: usize,
    nlat: usize,
    nlon: usize,
    cos_theta: Vec<f64>,
    gl_weights: Vec<f64>,
    legendre: Vec<f64>,
    plans: Plans,
}

impl SphereGrid {
    pub fn new(degree: usize) -> Self {
        let degree = degree.max(1);
        let nlat = degree + 1;
        let nlon = 2 * degree + 2;
        let mut pairs: Vec<(f64, f64)> = crate::quad::gauss_legendre(nlat).to_vec();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let cos_theta: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let gl_weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let legendre = legendre_table(degree, &cos_theta);
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(nlon),
            inverse: planner.plan_fft_inverse(nlon),
        };
        Self { degree, nlat, nlon, cos_theta, gl_weights, legendre, plans }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Colatitude and longitude of node `i`.
    pub fn angles(&self, i: usize) -> (f64, f64) {
        let (j, k) = (i / self.nlon, i % self.nlon);
        (self.cos_theta[j].acos(), 2.0 * PI * k as f64 / self.nlon as f64)
    }

    pub fn unit_vector(&self, i: usize) -> [f64; 3] {
        let (j, k) = (i / self.nlon, i % self.nlon);
        let ct = self.cos_theta[j];
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let ph = 2.0 * PI * k as f64 / self.nlon as f64;
        [st * ph.cos(), st * ph.sin(), ct]
    }

    /// Quadrature weight of each node; they sum to `4π`.
    pub fn area_weights(&self) -> Vec<f64> {
        let dphi = 2.0 * PI / self.nlon as f64;
        (0..self.len()).map(|i| self.gl_weights[i / self.nlon] * dphi).collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        let dphi = 2.0 * PI / self.nlon as f64;
        f.chunks(self.nlon)
            .zip(&self.gl_weights)
            .map(|(row, w)| w * row.iter().sum::<f64>())
            .sum::<f64>()
            * dphi
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate(f) / (4.0 * PI)
    }

    fn plm(&self, l: usize, m: usize) -> &[f64] {
        let k = tri_index(self.degree, l, m) * self.nlat;
        &self.legendre[k..k + self.nlat]
    }

    pub fn analyze(&self, f: &[f64]) -> SpectralCoeffs {
        assert_eq!(f.len(), self.len(), "field size does not match the sphere grid");
        let lmax = self.degree;
        let dphi = 2.0 * PI / self.nlon as f64;
        // fm[m * nlat + j]: longitudinal Fourier coefficient on latitude j.
        let mut fm = vec![Complex64::new(0.0, 0.0); (lmax + 1) * self.nlat];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nlon];
        for j in 0..self.nlat {
            for (b, v) in buf.iter_mut().zip(&f[j * self.nlon..(j + 1) * self.nlon]) {
                *b = Complex64::new(*v, 0.0);
            }
            self.plans.forward.process(&mut buf);
            for m in 0..=lmax {
                fm[m * self.nlat + j] = buf[m] * (dphi * self.gl_weights[j]);
            }
        }
        let mut out = SpectralCoeffs::zeros(lmax);
        for m in 0..=lmax {
            let row = &fm[m * self.nlat..(m + 1) * self.nlat];
            for l in m..=lmax {
                let p = self.plm(l, m);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, b) in p.iter().zip(row) {
                    acc += b * *a;
                }
                out.set(l, m, acc);
            }
        }
        out
    }

    pub fn synthesize(&self, c: &SpectralCoeffs) -> Vec<f64> {
        assert_eq!(c.degree(), self.degree, "coefficient degree does not match grid");
        let lmax = self.degree;
        let mut out = vec![0.0; self.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nlon];
        for j in 0..self.nlat {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for m in 0..=lmax {
                let mut g = Complex64::new(0.0, 0.0);
                for l in m..=lmax {
                    g += c.get(l, m) * self.plm(l, m)[j];
                }
                if m == 0 {
                    buf[0] = Complex64::new(g.re, 0.0);
                } else {
                    buf[m] += g;
                    buf[self.nlon - m] += g.conj();
                }
            }
            self.plans.inverse.process(&mut buf);
            for (o, b) in out[j * self.nlon..(j + 1) * self.nlon].iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    }

    /// Round Laplacian of the band-limited part of `f`.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut c = self.analyze(f);
        c.scale_by_degree(|l| -((l * (l + 1)) as f64));
        self.synthesize(&c)
    }

    /// Orthogonal projection onto degrees `≤ L`.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        self.synthesize(&self.analyze(f))
    }
}

fn legendre_table(lmax: usize, xs: &[f64]) -> Vec<f64> {
    let nlat = xs.len();
    let mut table = vec![0.0; tri_len(lmax) * nlat];
    for (j, &x) in xs.iter().enumerate() {
        let s = (1.0 - x * x).max(0.0).sqrt();
        let mut pmm = 1.0 / (4.0 * PI).sqrt();
        for m in 0..=lmax {
            if m > 0 {
                pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
            }
            table[tri_index(lmax, m, m) * nlat + j] = pmm;
            if m == lmax {
                break;
            }
            let mut p_prev = pmm;
            let mut p = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
            table[tri_index(lmax, m + 1, m) * nlat + j] = p;
            for l in m + 2..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                let next = a * (x * p - b * p_prev);
                p_prev = p;
                p = next;
                table[tri_index(lmax, l, m) * nlat + j] = p;
            }
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn y10(v: [f64; 3]) -> f64 {
        (3.0 / (4.0 * PI)).sqrt() * v[2]
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        let g = SphereGrid::new(16);
        let s: f64 = g.area_weights().iter().sum();
        assert!((s - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn degree_one_coefficient_is_exact() {
        let g = SphereGrid::new(12);
        let f: Vec<f64> = (0..g.len()).map(|i| y10(g.unit_vector(i))).collect();
        let c = g.analyze(&f);
        assert!((c.get(1, 0).re - 1.0).abs() < 1e-13);
        assert!(c.get(2, 0).norm() < 1e-13 && c.get(1, 1).norm() < 1e-13);
    }

    #[test]
    fn laplacian_eigenvalues() {
        let g = SphereGrid::new(10);
        // x·y is a degree-2 harmonic, x is degree 1.
        let f2: Vec<f64> = (0..g.len()).map(|i| { let v = g.unit_vector(i); v[0] * v[1] }).collect();
        let lap = g.laplacian(&f2);
        for (a, b) in lap.iter().zip(&f2) {
            assert!((a + 6.0 * b).abs() < 1e-12);
        }
        let f1: Vec<f64> = (0..g.len()).map(|i| g.unit_vector(i)[0]).collect();
        let lap = g.laplacian(&f1);
        for (a, b) in lap.iter().zip(&f1) {
            assert!((a + 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn products_up_to_degree_2l_integrate_exactly() {
        let l = 8;
        let g = SphereGrid::new(l);
        // z^{2L} has exact integral 4π/(2L+1).
        let f: Vec<f64> = (0..g.len()).map(|i| g.unit_vector(i)[2].powi(2 * l as i32)).collect();
        assert!((g.integrate(&f) - 4.0 * PI / (2 * l + 1) as f64).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_on_band_limited_fields(seed in proptest::collection::vec(-1.0f64..1.0, 21)) {
            let g = SphereGrid::new(5);
            let mut c = SpectralCoeffs::zeros(5);
            let mut it = seed.iter();
            for m in 0..=5 {
                for l in m..=5 {
                    let re = *it.next().unwrap();
                    let im = if m == 0 { 0.0 } else { 0.5 * re };
                    c.set(l, m, Complex64::new(re, im));
                }
            }
            let f = g.synthesize(&c);
            let back = g.analyze(&f);
            for m in 0..=5 {
                for l in m..=5 {
                    prop_assert!((back.get(l, m) - c.get(l, m)).norm() < 1e-12);
                }
            }
        }
    }
}
