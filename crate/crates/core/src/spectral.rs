//! Periodic pseudospectral substrate.
//!
//! The physical box is `[-L/2, L/2)` sampled at `x_m = -L/2 + m L / n`.
//! Coefficients are stored in FFT order (`j = 0..n`, signed index `k_j = j`
//! for `j < n/2`, `k_j = j - n` otherwise, so the Nyquist mode carries
//! `k = -n/2`) at frequencies `xi_j = 2 pi k_j / L`.
//!
//! Normalization (fixed, every formula in the crate is written against it):
//!
//! ```text
//! f(x_m) = L^{-1/2} sum_j c_j exp(i xi_j x_m)
//! c_j    = L^{1/2} n^{-1} sum_m f(x_m) exp(-i xi_j x_m)
//! ```
//!
//! so `sum_m |f(x_m)|^2 dx = sum_j |c_j|^2` exactly (discrete Parseval) and
//! `c_j ~ sqrt(2 pi / L) f_hat(xi_j)` for the unitary continuous transform.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    n_points: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(n_points: usize, box_length: f64) -> Result<Self> {
        if n_points < 8 || n_points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_points must be even and >= 8, got {n_points}"
            )));
        }
        if !(box_length > 0.0 && box_length.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive, got {box_length}"
            )));
        }
        Ok(Self {
            n_points,
            box_length,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.n_points as f64
    }

    /// Spacing between neighbouring frequencies, `2 pi / L`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    /// Signed integer index of storage slot `j`.
    pub fn index(&self, j: usize) -> i64 {
        let n = self.n_points as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n_points / 2
    }

    pub fn frequency(&self, j: usize) -> f64 {
        self.index(j) as f64 * self.dxi()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.frequency(j)).collect()
    }

    /// `|xi|` of the Nyquist mode, `pi n / L`.
    pub fn nyquist(&self) -> f64 {
        PI * self.n_points as f64 / self.box_length
    }

    pub fn x(&self, m: usize) -> f64 {
        -0.5 * self.box_length + m as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|m| self.x(m)).collect()
    }

    /// Storage slot holding signed index `k`, if representable.
    pub fn slot(&self, k: i64) -> Option<usize> {
        let n = self.n_points as i64;
        if k >= -n / 2 && k < n / 2 {
            Some(k.rem_euclid(n) as usize)
        } else {
            None
        }
    }

    /// Slot of `-k_j`; the Nyquist slot maps to itself.
    pub fn mirror(&self, j: usize) -> usize {
        (self.n_points - j) % self.n_points
    }
}

pub fn make_grid(n_points: usize, box_length: f64) -> Result<Grid> {
    Grid::new(n_points, box_length)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl SpectralField {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>, real: bool) -> Result<Self> {
        if coeffs.len() != grid.n_points() {
            return Err(Error::LengthMismatch {
                expected: grid.n_points(),
                actual: coeffs.len(),
            });
        }
        let mut field = Self { grid, coeffs, real };
        if real {
            field.symmetrize();
        }
        Ok(field)
    }

    pub fn zeros(grid: Grid, real: bool) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_points()],
            real,
        }
    }

    /// Build from a closure over frequency; used for synthetic spectra.
    pub fn from_spectrum(grid: Grid, real: bool, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let coeffs = (0..grid.n_points()).map(|j| f(grid.frequency(j))).collect();
        Self::new(grid, coeffs, real)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest `|c(-xi) - conj(c(xi))|`; zero for an exactly Hermitian field.
    pub fn hermitian_residual(&self) -> f64 {
        let g = self.grid;
        (0..g.n_points())
            .map(|j| (self.coeffs[g.mirror(j)] - self.coeffs[j].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Sum of `|c_j|^2`, equal to the physical `L^2` norm squared.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    fn symmetrize(&mut self) {
        let g = self.grid;
        let n = g.n_points();
        for j in 1..n / 2 {
            let m = g.mirror(j);
            let avg = 0.5 * (self.coeffs[j] + self.coeffs[m].conj());
            self.coeffs[j] = avg;
            self.coeffs[m] = avg.conj();
        }
        self.coeffs[0].im = 0.0;
        self.coeffs[g.nyquist_slot()].im = 0.0;
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let entry = guard.entry(n).or_insert_with(|| {
        let mut planner = FftPlanner::new();
        Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    });
    (entry.forward.clone(), entry.inverse.clone())
}

/// Planned transforms for one grid plus the phase factors of the centred box.
///
/// Cheap to clone; the evolution keeps one around instead of going through
/// the plan cache on every stage.
#[derive(Clone)]
pub struct Transformer {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // (-1)^{k_j}: shift from x starting at 0 to x starting at -L/2
    sign: Vec<f64>,
}

impl Transformer {
    pub fn new(grid: Grid) -> Self {
        let (forward, inverse) = plans(grid.n_points());
        let sign = (0..grid.n_points())
            .map(|j| if grid.index(j) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        Self {
            grid,
            forward,
            inverse,
            sign,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Physical samples to coefficients, in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
        let scale = self.grid.box_length().sqrt() / self.grid.n_points() as f64;
        for (c, s) in buf.iter_mut().zip(&self.sign) {
            *c *= scale * s;
        }
    }

    /// Coefficients to physical samples, in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        for (c, s) in buf.iter_mut().zip(&self.sign) {
            *c *= *s;
        }
        self.inverse.process(buf);
        let scale = 1.0 / self.grid.box_length().sqrt();
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    pub fn forward_real(&self, values: &[f64]) -> Result<SpectralField> {
        self.check_len(values.len())?;
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        SpectralField::new(self.grid, buf, true)
    }

    pub fn forward_complex(&self, values: &[Complex64]) -> Result<SpectralField> {
        self.check_len(values.len())?;
        let mut buf = values.to_vec();
        self.forward_in_place(&mut buf);
        SpectralField::new(self.grid, buf, false)
    }

    pub fn inverse(&self, field: &SpectralField) -> Result<Vec<Complex64>> {
        self.check_len(field.coeffs.len())?;
        if field.grid != self.grid {
            return Err(Error::InvalidGrid("field grid differs from transformer grid".into()));
        }
        let mut buf = field.coeffs.clone();
        self.inverse_in_place(&mut buf);
        Ok(buf)
    }

    pub fn inverse_real(&self, field: &SpectralField) -> Result<Vec<f64>> {
        Ok(self.inverse(field)?.into_iter().map(|c| c.re).collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.n_points() {
            return Err(Error::LengthMismatch {
                expected: self.grid.n_points(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Real samples to a Hermitian field.
pub fn forward_transform(values: &[f64], grid: &Grid) -> Result<SpectralField> {
    Transformer::new(*grid).forward_real(values)
}

/// Complex samples to a general field.
pub fn forward_transform_complex(values: &[Complex64], grid: &Grid) -> Result<SpectralField> {
    Transformer::new(*grid).forward_complex(values)
}

pub fn inverse_transform(field: &SpectralField) -> Result<Vec<Complex64>> {
    Transformer::new(field.grid).inverse(field)
}

/// Modes with `|xi| >= cutoff` are removed, `cutoff = fraction * pi n / L`
/// with `fraction = 2 / (degree + 1)`. A product of `degree + 1` fields
/// supported below the cutoff aliases only onto removed modes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DealiasRule {
    pub degree: usize,
    pub fraction: f64,
    pub cutoff: f64,
    /// Largest retained signed index.
    pub max_index: i64,
}

impl DealiasRule {
    pub fn new(grid: &Grid, degree: usize) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidParameter(format!(
                "dealias degree must be >= 2, got {degree}"
            )));
        }
        let fraction = 2.0 / (degree as f64 + 1.0);
        let half = grid.n_points() as f64 / 2.0;
        let limit = fraction * half;
        // strict: index == limit is dropped
        let mut max_index = limit.floor() as i64;
        if (max_index as f64) >= limit {
            max_index -= 1;
        }
        Ok(Self {
            degree,
            fraction,
            cutoff: fraction * grid.nyquist(),
            max_index,
        })
    }

    /// Largest retained `|xi|`.
    pub fn max_frequency(&self, grid: &Grid) -> f64 {
        self.max_index as f64 * grid.dxi()
    }

    pub fn keeps(&self, grid: &Grid, j: usize) -> bool {
        grid.index(j).abs() <= self.max_index
    }

    pub fn apply_in_place(&self, grid: &Grid, coeffs: &mut [Complex64]) {
        for (j, c) in coeffs.iter_mut().enumerate() {
            if !self.keeps(grid, j) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dealiased {
    pub field: SpectralField,
    pub rule: DealiasRule,
}

pub fn dealias(field: &SpectralField, degree: usize) -> Result<Dealiased> {
    let rule = DealiasRule::new(&field.grid, degree)?;
    let mut out = field.clone();
    rule.apply_in_place(&field.grid, &mut out.coeffs);
    Ok(Dealiased { field: out, rule })
}

/// `c_out(xi) = multiplier(xi) c_in(xi)`.
pub fn apply_multiplier(
    field: &SpectralField,
    multiplier: impl Fn(f64) -> f64,
) -> Result<SpectralField> {
    let g = field.grid;
    let mut coeffs = Vec::with_capacity(g.n_points());
    for (j, c) in field.coeffs.iter().enumerate() {
        let xi = g.frequency(j);
        let m = multiplier(xi);
        if !m.is_finite() {
            return Err(Error::NonFiniteMultiplier { xi });
        }
        coeffs.push(c * m);
    }
    // no re-symmetrization: an even multiplier keeps exact symmetry on its own
    Ok(SpectralField {
        grid: g,
        coeffs,
        real: field.real,
    })
}

/// `d^order/dx^order` via `(i xi)^order`. Odd orders zero the Nyquist mode.
pub fn derivative(field: &SpectralField, order: u32) -> SpectralField {
    let g = field.grid;
    let mut out = field.clone();
    for (j, c) in out.coeffs.iter_mut().enumerate() {
        *c *= Complex64::new(0.0, g.frequency(j)).powu(order);
    }
    if order % 2 == 1 {
        out.coeffs[g.nyquist_slot()] = Complex64::new(0.0, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_dft(grid: &Grid, values: &[Complex64]) -> Vec<Complex64> {
        let n = grid.n_points();
        let scale = grid.box_length().sqrt() / n as f64;
        (0..n)
            .map(|j| {
                let xi = grid.frequency(j);
                values
                    .iter()
                    .enumerate()
                    .map(|(m, v)| v * Complex64::from_polar(1.0, -xi * grid.x(m)))
                    .sum::<Complex64>()
                    * scale
            })
            .collect()
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn grid_frequencies() {
        let g = make_grid(8, 2.0 * PI).unwrap();
        let mut f = g.frequencies();
        f.sort_by(f64::total_cmp);
        let expect: Vec<f64> = (-4..4).map(|k| k as f64).collect();
        for (a, b) in f.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let g = make_grid(16, 4.0 * PI).unwrap();
        assert!((g.dxi() - 0.5).abs() < 1e-15);
        assert!(make_grid(7, 2.0 * PI).is_err());
        assert!(make_grid(6, 2.0 * PI).is_err());
        assert!(make_grid(16, 0.0).is_err());
        assert!(make_grid(16, -1.0).is_err());
    }

    #[test]
    fn constant_and_cosine() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let ones = vec![1.0; 32];
        let f = forward_transform(&ones, &g).unwrap();
        for (j, c) in f.coeffs().iter().enumerate() {
            if j == 0 {
                assert!((c.re - (2.0 * PI).sqrt()).abs() < 1e-13);
            } else {
                assert!(c.norm() < 1e-14);
            }
        }
        let cosx: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
        let f = forward_transform(&cosx, &g).unwrap();
        let p = f.coeffs()[g.slot(1).unwrap()].norm();
        let m = f.coeffs()[g.slot(-1).unwrap()].norm();
        assert!((p - m).abs() < 1e-14);
        assert!(p > 0.1);
        for k in -16..16i64 {
            if k.abs() != 1 {
                assert!(f.coeffs()[g.slot(k).unwrap()].norm() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_direct_dft_on_shifted_comb() {
        let g = make_grid(16, 3.0).unwrap();
        let mut values = vec![Complex64::new(0.0, 0.0); 16];
        values[3] = Complex64::new(1.0, 0.0);
        values[11] = Complex64::new(0.0, 2.0);
        let fast = forward_transform_complex(&values, &g).unwrap();
        let slow = direct_dft(&g, &values);
        for (a, b) in fast.coeffs().iter().zip(&slow) {
            assert!((a - b).norm() < 1e-13);
        }
        // translating the comb by one node multiplies c_j by exp(-i xi_j dx)
        let shifted: Vec<Complex64> = (0..16).map(|m| values[(m + 15) % 16]).collect();
        let fs = forward_transform_complex(&shifted, &g).unwrap();
        for j in 0..16 {
            let expect = fast.coeffs()[j] * Complex64::from_polar(1.0, -g.frequency(j) * g.dx());
            assert!((fs.coeffs()[j] - expect).norm() < 1e-13);
        }
        let back = inverse_transform(&fs).unwrap();
        for (a, b) in back.iter().zip(&shifted) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = make_grid(256, 17.0).unwrap();
        let v = pseudo_random(256, 7);
        let f = forward_transform(&v, &g).unwrap();
        let back: Vec<f64> = inverse_transform(&f).unwrap().iter().map(|c| c.re).collect();
        let num: f64 = v.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den < 1e-12);
        let phys: f64 = v.iter().map(|a| a * a).sum::<f64>() * g.dx();
        assert!((phys - f.norm_sqr()).abs() / phys < 1e-12);
    }

    #[test]
    fn zero_and_hermitian_inverse() {
        let g = make_grid(64, 10.0).unwrap();
        let z = SpectralField::zeros(g, true);
        assert!(inverse_transform(&z).unwrap().iter().all(|c| c.norm() == 0.0));
        let v = pseudo_random(64, 3);
        let f = forward_transform(&v, &g).unwrap();
        assert_eq!(f.hermitian_residual(), 0.0);
        let back = inverse_transform(&f).unwrap();
        assert!(back.iter().all(|c| c.im.abs() < 1e-12));
    }

    #[test]
    fn dealias_fractions() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let rule = DealiasRule::new(&g, 2).unwrap();
        assert!((rule.fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rule.max_index, 5);
        let rule5 = DealiasRule::new(&make_grid(512, 40.0 * PI).unwrap(), 5).unwrap();
        assert!((rule5.fraction - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rule5.max_index, 85);
        // exact-integer limit is dropped: degree 3 on n = 16 keeps |k| <= 3
        assert_eq!(DealiasRule::new(&g, 3).unwrap().max_index, 3);
        assert!(DealiasRule::new(&g, 1).is_err());
    }

    #[test]
    fn dealias_removes_modes_and_is_idempotent() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let v = pseudo_random(16, 11);
        let f = forward_transform(&v, &g).unwrap();
        let d = dealias(&f, 2).unwrap();
        for j in 0..16 {
            if g.index(j).abs() > 5 {
                assert_eq!(d.field.coeffs()[j], Complex64::new(0.0, 0.0));
            } else {
                assert_eq!(d.field.coeffs()[j], f.coeffs()[j]);
            }
        }
        let dd = dealias(&d.field, 2).unwrap();
        assert_eq!(dd.field, d.field);
    }

    #[test]
    fn band_limited_field_survives_dealias() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let f = SpectralField::from_spectrum(g, true, |xi| {
            if xi.abs() <= 5.0 {
                Complex64::new(1.0 / (1.0 + xi * xi), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap();
        assert_eq!(dealias(&f, 2).unwrap().field, f);
    }

    #[test]
    fn multipliers() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let cosx: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
        let f = forward_transform(&cosx, &g).unwrap();
        assert_eq!(apply_multiplier(&f, |_| 1.0).unwrap(), f);
        let a = apply_multiplier(&f, f64::abs).unwrap();
        for k in [-1i64, 1] {
            let j = g.slot(k).unwrap();
            assert!((a.coeffs()[j].norm() - f.coeffs()[j].norm()).abs() < 1e-15);
        }
        assert!(apply_multiplier(&f, |xi| if xi > 3.0 { f64::INFINITY } else { 1.0 }).is_err());

        let v = pseudo_random(32, 5);
        let f = forward_transform(&v, &g).unwrap();
        let s = 0.07;
        let twice = apply_multiplier(&apply_multiplier(&f, |x| (s * x.abs()).exp()).unwrap(), |x| {
            (s * x.abs()).exp()
        })
        .unwrap();
        let once = apply_multiplier(&f, |x| (2.0 * s * x.abs()).exp()).unwrap();
        for (a, b) in twice.coeffs().iter().zip(once.coeffs()) {
            assert!((a - b).norm() <= 1e-14 * b.norm().max(1e-300));
        }
        let even = apply_multiplier(&f, |x| 1.0 + x * x).unwrap();
        assert!(even.hermitian_residual() == 0.0);
    }

    #[test]
    fn odd_derivative_drops_nyquist() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let v = pseudo_random(16, 9);
        let f = forward_transform(&v, &g).unwrap();
        let d = derivative(&f, 1);
        assert_eq!(d.coeffs()[g.nyquist_slot()], Complex64::new(0.0, 0.0));
        assert!(d.hermitian_residual() < 1e-14);
        let phys = inverse_transform(&d).unwrap();
        assert!(phys.iter().all(|c| c.im.abs() < 1e-12));
    }
}
