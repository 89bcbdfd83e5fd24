//! Fractional Laplacian on periodic grids: Fourier multiplier, Balakrishnan
//! quadrature, resolvent fields and fractional norms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FieldOnGrid;
use crate::quadrature::{balakrishnan_prefactor, MQuadrature, MRule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub s: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl FracParams {
    pub fn new(dim: usize, s: f64, sigma: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("s must lie in (0,1), got {s}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if dim == 0 {
            return Err(Error::Domain("dimension must be >= 1".into()));
        }
        Ok(FracParams { s, sigma, dim })
    }

    /// Scaling index N/2 - s/sigma.
    pub fn s_c(&self) -> f64 {
        self.dim as f64 / 2.0 - self.s / self.sigma
    }

    /// sigma N - 2s; vanishes in the L2-critical case.
    pub fn delta(&self) -> f64 {
        self.sigma * self.dim as f64 - 2.0 * self.s
    }

    pub fn is_l2_critical(&self) -> bool {
        (self.sigma - 2.0 * self.s / self.dim as f64).abs() <= 1e-12
    }

    /// Hypotheses of the radial blowup result: N >= 2, s in (1/2,1), 0 <= s_c <= s, sigma < 2s.
    pub fn validate_radial_blowup(&self) -> Result<()> {
        let sc = self.s_c();
        if self.dim < 2 {
            return Err(Error::Domain(format!("radial blowup needs N >= 2, got {}", self.dim)));
        }
        if !(self.s > 0.5 && self.s < 1.0) {
            return Err(Error::Domain(format!("radial blowup needs s in (1/2,1), got {}", self.s)));
        }
        if sc < -1e-12 || sc > self.s + 1e-12 {
            return Err(Error::Domain(format!("radial blowup needs 0 <= s_c <= s, got s_c = {sc}")));
        }
        if self.sigma >= 2.0 * self.s {
            return Err(Error::Domain(format!("radial blowup needs sigma < 2s, got sigma = {}", self.sigma)));
        }
        Ok(())
    }
}

/// c_s = sqrt(sin(pi s)/pi).
pub fn resolvent_normalization(s: f64) -> f64 {
    balakrishnan_prefactor(s).sqrt()
}

/// (-Delta)^s u via the multiplier |xi|^(2s); the zero mode maps to 0.
pub fn frac_laplacian(u: &FieldOnGrid, s: f64) -> Result<FieldOnGrid> {
    if !(s > 0.0 && s <= 2.0) {
        return Err(Error::Domain(format!("frac_laplacian needs 0 < s <= 2, got {s}")));
    }
    u.check_finite()?;
    Ok(u.apply_symbol(|x2| if x2 == 0.0 { 0.0 } else { x2.powf(s) }))
}

/// ||(-Delta)^(s/2) u||; s = 0 gives the L2 norm.
pub fn frac_seminorm(u: &FieldOnGrid, s: f64) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("frac_seminorm needs s >= 0, got {s}")));
    }
    u.check_finite()?;
    let spec = u.spectrum();
    Ok(seminorm_from_spectrum(u, &spec, s))
}

pub(crate) fn seminorm_from_spectrum(u: &FieldOnGrid, spec: &[Complex64], s: f64) -> f64 {
    let g = &u.grid;
    let norm = g.cell_volume() / g.len() as f64;
    let xi2 = g.xi_squared();
    let sum: f64 = spec
        .iter()
        .zip(&xi2)
        .map(|(v, &x)| {
            let w = if s == 0.0 { 1.0 } else if x == 0.0 { 0.0 } else { x.powf(s) };
            w * v.norm_sqr()
        })
        .sum();
    (norm * sum).sqrt()
}

/// E[u] = 1/2 ||(-Delta)^(s/2) u||^2 - 1/(2 sigma + 2) ||u||^(2 sigma + 2).
pub fn energy(u: &FieldOnGrid, p: &FracParams) -> Result<f64> {
    let g = frac_seminorm(u, p.s)?;
    Ok(0.5 * g * g - u.lp_norm_pow(2.0 * p.sigma + 2.0) / (2.0 * p.sigma + 2.0))
}

pub fn balakrishnan_scalar(x: f64, s: f64, q: &MQuadrature) -> Result<f64> {
    q.balakrishnan_scalar(x, s)
}

/// Rule certified on the grid's spectral range.
pub fn field_rule(u: &FieldOnGrid, s: f64, q: &MQuadrature) -> Result<MRule> {
    let (xmin, xmax) = u.grid.spectral_range();
    q.certified_rule(s, xmin, xmax)
}

/// (sin pi s / pi) int m^(s-1) (-Delta)(-Delta+m)^(-1) u dm, one resolvent per node.
pub fn balakrishnan_apply(u: &FieldOnGrid, s: f64, q: &MQuadrature) -> Result<FieldOnGrid> {
    u.check_finite()?;
    let rule = field_rule(u, s, q)?;
    Ok(balakrishnan_apply_with(u, s, &rule))
}

pub fn balakrishnan_apply_with(u: &FieldOnGrid, s: f64, rule: &MRule) -> FieldOnGrid {
    let c2 = balakrishnan_prefactor(s);
    let xi2 = u.grid.xi_squared();
    let weights: Vec<f64> =
        rule.nodes.iter().zip(&rule.weights).map(|(&m, &w)| c2 * w * m.powf(s - 1.0)).collect();
    let mut spec = u.spectrum();
    let mut acc = vec![Complex64::new(0.0, 0.0); spec.len()];
    for (&m, &w) in rule.nodes.iter().zip(&weights) {
        for ((a, v), &x) in acc.iter_mut().zip(&spec).zip(&xi2) {
            *a += v * (w * x / (x + m));
        }
    }
    spec.copy_from_slice(&acc);
    FieldOnGrid::from_spectrum(&u.grid, spec)
}

/// u_m = c_s (-Delta + m)^(-1) u.
pub fn resolvent_field(u: &FieldOnGrid, m: f64, s: f64) -> Result<FieldOnGrid> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!("resolvent needs m > 0, got {m}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("resolvent normalization needs s in (0,1), got {s}")));
    }
    u.check_finite()?;
    let cs = resolvent_normalization(s);
    Ok(u.apply_symbol(|x2| cs / (x2 + m)))
}

/// int_0^inf m^s ||grad u_m||^2 dm, evaluated mode by mode.
pub fn weighted_gradient_integral(u: &FieldOnGrid, s: f64, q: &MQuadrature) -> Result<f64> {
    u.check_finite()?;
    let rule = field_rule(u, s, q)?;
    Ok(weighted_gradient_integral_with(u, s, &rule))
}

pub fn weighted_gradient_integral_with(u: &FieldOnGrid, s: f64, rule: &MRule) -> f64 {
    let c2 = balakrishnan_prefactor(s);
    let g = &u.grid;
    let spec = u.spectrum();
    let xi2 = g.xi_squared();
    let pw: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
    let norm = g.cell_volume() / g.len() as f64;
    let per_node: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&m, &w)| {
            let grad_sq: f64 = pw.iter().zip(&xi2).map(|(p, &x)| p * x / ((x + m) * (x + m))).sum();
            w * m.powf(s) * c2 * norm * grad_sq
        })
        .collect();
    crate::grid::pairwise_sum(&per_node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    #[test]
    fn plane_wave_eigenvalue() {
        let g = Grid::new(2, PI, 32).unwrap();
        let u = FieldOnGrid::from_fn(&g, |x| Complex64::from_polar(1.0, 3.0 * x[0] + 4.0 * x[1]));
        let v = frac_laplacian(&u, 0.5).unwrap();
        for (a, b) in v.values.iter().zip(&u.values) {
            assert!((a - 5.0 * b).norm() < 1e-11);
        }
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = Grid::new(1, 5.0, 64).unwrap();
        let u = FieldOnGrid::zeros(&g);
        assert_eq!(frac_laplacian(&u, 0.7).unwrap().norm(), 0.0);
        assert_eq!(balakrishnan_apply(&u, 0.7, &MQuadrature::default()).unwrap().norm(), 0.0);
        assert_eq!(weighted_gradient_integral(&u, 0.7, &MQuadrature::default()).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        let g = Grid::new(1, 5.0, 16).unwrap();
        let mut u = FieldOnGrid::zeros(&g);
        u.values[3] = Complex64::new(f64::NAN, 0.0);
        assert!(frac_laplacian(&u, 0.5).is_err());
    }

    #[test]
    fn resolvent_of_plane_wave() {
        let g = Grid::new(2, PI, 16).unwrap();
        let u = FieldOnGrid::from_fn(&g, |x| Complex64::from_polar(1.0, 2.0 * x[1]));
        let um = resolvent_field(&u, 1.0, 0.5).unwrap();
        let cs = 1.0 / PI.sqrt();
        assert!((cs - 0.564190).abs() < 1e-6);
        for (a, b) in um.values.iter().zip(&u.values) {
            assert!((a - b * (cs / 5.0)).norm() < 1e-13);
        }
        assert!(resolvent_field(&u, 0.0, 0.5).is_err());
    }

    #[test]
    fn seminorm_of_plane_wave_and_constant() {
        let g = Grid::new(2, PI, 16).unwrap();
        let u = FieldOnGrid::from_fn(&g, |x| Complex64::from_polar(1.0, 2.0 * x[0]));
        let want = (g.volume() * 2f64.powf(1.6)).sqrt();
        assert!((frac_seminorm(&u, 0.8).unwrap() - want).abs() < 1e-10 * want);
        let c = FieldOnGrid::from_real(&g, |_| 3.0);
        assert!(frac_seminorm(&c, 0.8).unwrap() < 1e-12);
        assert!((frac_seminorm(&c, 0.0).unwrap() - c.norm()).abs() < 1e-12);
    }

    #[test]
    fn scaling_index() {
        let p = FracParams::new(2, 0.8, 1.0).unwrap();
        assert!((p.s_c() - 0.2).abs() < 1e-15);
        assert!((p.delta() - 0.4).abs() < 1e-15);
        assert!(p.validate_radial_blowup().is_ok());
        assert!(FracParams::new(2, 0.8, 0.8).unwrap().is_l2_critical());
        assert!(FracParams::new(1, 0.8, 1.0).unwrap().validate_radial_blowup().is_err());
    }
}
