//! Periodic uniform grids on [-L, L)^dim and complex fields sampled on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_length: f64,
    points: usize,
}

impl Grid {
    pub fn new(dim: usize, half_length: f64, points: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidInput(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidInput(format!("half-length must be positive, got {half_length}")));
        }
        if points < 2 || !points.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "points per dimension must be a power of two >= 2, got {points}"
            )));
        }
        Ok(Grid { dim, half_length, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    /// Total number of samples, M^dim.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_length).powi(self.dim as i32)
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    /// Wavenumber of DFT bin `j`: pi k / L with k in [-M/2, M/2).
    pub fn wavenumber(&self, j: usize) -> f64 {
        let m = self.points as i64;
        let k = if (j as i64) < m / 2 { j as i64 } else { j as i64 - m };
        PI * k as f64 / self.half_length
    }

    /// Position of flat index `idx`; the second component is 0 in 1D.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coordinate(idx), 0.0],
            _ => [self.coordinate(idx / self.points), self.coordinate(idx % self.points)],
        }
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.position(idx);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.wavenumber(idx), 0.0],
            _ => [self.wavenumber(idx / self.points), self.wavenumber(idx % self.points)],
        }
    }

    /// |xi|^2 for every DFT bin, in transform order.
    pub fn xi_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let k = self.wavevector(i);
                k[0] * k[0] + k[1] * k[1]
            })
            .collect()
    }

    /// Smallest nonzero and largest |xi|^2 on the grid.
    pub fn spectral_range(&self) -> (f64, f64) {
        let kmin = PI / self.half_length;
        let kmax = PI / self.spacing();
        (kmin * kmin, self.dim as f64 * kmax * kmax)
    }

    /// Largest |k| per axis that survives a dealiasing mask with the given fraction.
    pub fn dealias_cutoff(&self, fraction: f64) -> f64 {
        fraction * PI / self.spacing()
    }

    /// 1 inside the square dealias band, 0 outside.
    pub fn dealias_mask(&self, fraction: f64) -> Vec<f64> {
        let kc = self.dealias_cutoff(fraction) * (1.0 + 1e-12);
        (0..self.len())
            .map(|i| {
                let k = self.wavevector(i);
                if k[0].abs() <= kc && k[1].abs() <= kc {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FieldOnGrid {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl FieldOnGrid {
    pub fn zeros(grid: &Grid) -> Self {
        FieldOnGrid { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn new(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(FieldOnGrid { grid: grid.clone(), values })
    }

    /// Sample `f` at every grid point; in 1D the second coordinate is 0.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        FieldOnGrid { grid: grid.clone(), values }
    }

    pub fn from_real(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(())
    }

    /// h^dim sum |u|^2.
    pub fn norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// h^dim sum conj(u) v.
    pub fn inner(&self, other: &FieldOnGrid) -> Complex64 {
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s * self.grid.cell_volume()
    }

    /// h^dim sum |u|^p.
    pub fn lp_norm_pow(&self, p: f64) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.norm().powf(p)).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        FieldOnGrid { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn sub(&self, other: &FieldOnGrid) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        FieldOnGrid { grid: self.grid.clone(), values }
    }

    pub fn add(&self, other: &FieldOnGrid) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        FieldOnGrid { grid: self.grid.clone(), values }
    }

    /// Forward DFT of the samples (unnormalized).
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut d = self.values.clone();
        fft::forward(&mut d, self.grid.points(), self.grid.dim());
        d
    }

    pub fn from_spectrum(grid: &Grid, mut spec: Vec<Complex64>) -> Self {
        fft::inverse(&mut spec, grid.points(), grid.dim());
        FieldOnGrid { grid: grid.clone(), values: spec }
    }

    /// Apply a real Fourier multiplier given as a function of |xi|^2.
    pub fn apply_symbol(&self, symbol: impl Fn(f64) -> f64) -> Self {
        let mut spec = self.spectrum();
        for (i, v) in spec.iter_mut().enumerate() {
            let k = self.grid.wavevector(i);
            *v *= symbol(k[0] * k[0] + k[1] * k[1]);
        }
        Self::from_spectrum(&self.grid, spec)
    }

    /// Random field whose spectrum lives in |k|_inf <= fraction * Nyquist, with
    /// coefficient magnitudes decaying like (1 + |k|^2)^-1.
    pub fn band_limited(grid: &Grid, fraction: f64, rng: &mut impl rand::Rng) -> Self {
        let kc = grid.dealias_cutoff(fraction);
        let spec = (0..grid.len())
            .map(|i| {
                let k = grid.wavevector(i);
                if k[0].abs() > kc || k[1].abs() > kc {
                    return Complex64::new(0.0, 0.0);
                }
                let amp = rng.gen_range(0.0..1.0) / (1.0 + k[0] * k[0] + k[1] * k[1]);
                Complex64::from_polar(amp * grid.len() as f64, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self::from_spectrum(grid, spec)
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        let spec = self.spectrum();
        Self::from_spectrum(&self.grid, derivative_spectrum(&self.grid, &spec, axis))
    }
}

/// i xi_axis * spec; the Nyquist bin is zeroed so that real fields stay real.
pub fn derivative_spectrum(grid: &Grid, spec: &[Complex64], axis: usize) -> Vec<Complex64> {
    let m = grid.points();
    spec.iter()
        .enumerate()
        .map(|(i, v)| {
            let j = match (grid.dim(), axis) {
                (1, _) => i,
                (_, 0) => i / m,
                _ => i % m,
            };
            if j == m / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                v * Complex64::new(0.0, grid.wavenumber(j))
            }
        })
        .collect()
}

/// Sum with pairwise splitting; the order is fixed by the input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_times_points_is_box_length() {
        let g = Grid::new(2, 12.5, 256).unwrap();
        assert!((g.spacing() * g.points() as f64 - 25.0).abs() < 1e-12);
    }

    #[test]
    fn wavenumbers_cover_symmetric_range() {
        let g = Grid::new(1, 4.0, 8).unwrap();
        let k: Vec<f64> = (0..8).map(|j| g.wavenumber(j) * 4.0 / PI).collect();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, 1.0, 8).is_err());
        assert!(Grid::new(1, 1.0, 12).is_err());
        assert!(Grid::new(1, -1.0, 8).is_err());
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid::new(1, PI, 32).unwrap();
        let u = FieldOnGrid::from_real(&g, |x| (3.0 * x[0]).sin());
        let du = u.derivative(0);
        for i in 0..g.len() {
            let x = g.coordinate(i);
            assert!((du.values[i].re - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
        }
    }
}
