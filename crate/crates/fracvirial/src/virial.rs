//! Localized virial M_phi[u] = 2 Im <u, grad phi . grad u> and the terms of
//! its exact time derivative along the flow, written through the resolvent
//! fields u_m = c_s (-Delta + m)^(-1) u.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cutoff::{self, c_eta, CutoffFields, RescaledCutoff};
use crate::error::{Error, Result};
use crate::fracops::{self, resolvent_normalization, FracParams};
use crate::grid::{derivative_spectrum, pairwise_sum, FieldOnGrid, Grid};
use crate::quadrature::{MQuadrature, MRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
pub enum HessianPath {
    /// Full contraction grad(u_m)^* . Hess(phi_R) . grad(u_m).
    #[default]
    Full,
    /// phi_R'' |grad u_m|^2, exact for radial u.
    Radial,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct EstimateDecomposition {
    /// 4 int int m^s grad(u_m)^* (I - Hess phi_R) grad(u_m) >= 0.
    pub localization_defect: f64,
    /// -(2 sigma/(sigma+1)) int (Delta phi_R - N) |u|^(2 sigma + 2).
    pub tail_nonlinear: f64,
    /// 4 sigma N E - 2 (sigma N - 2s) ||(-Delta)^(s/2) u||^2.
    pub core_identity: f64,
    pub biharmonic_term: f64,
    /// rhs_total - (core - defect + biharmonic + tail); pure quadrature error.
    pub residual: f64,
    /// 4 (int int m^s |grad u_m|^2 - s ||(-Delta)^(s/2) u||^2); matches residual up to roundoff.
    pub plancherel_gap: f64,
    /// R^(-sigma(N-1) + eps s) ||(-Delta)^(s/2) u||^(sigma/s + eps), when eps is given.
    pub strauss_scale: Option<f64>,
    /// 4 int int m^s psi_1 |grad u_m|^2.
    pub psi1_integral: f64,
    /// 4 c(eta) int int m^s psi_2^(N/2s) |grad u_m|^2.
    pub psi2_pow_integral: f64,
    /// (4s/(N+2s)) int psi_2 |u|^(4s/N + 2).
    pub psi2_nonlinear: f64,
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct VirialReport {
    pub radius: f64,
    pub m_phi: f64,
    pub hessian_term: f64,
    pub biharmonic_term: f64,
    pub nonlinear_term: f64,
    pub rhs_total: f64,
    pub energy: f64,
    pub grad_norm_sq: f64,
    pub full_rhs: f64,
    pub decomposition: EstimateDecomposition,
}

/// 4 sigma N E - 2 (sigma N - 2s) ||(-Delta)^(s/2) u||^2.
pub fn full_virial_rhs(u: &FieldOnGrid, p: &FracParams, energy: f64) -> Result<f64> {
    let g = fracops::frac_seminorm(u, p.s)?;
    Ok(core_identity(p, energy, g * g))
}

pub fn core_identity(p: &FracParams, energy: f64, grad_norm_sq: f64) -> f64 {
    let n = p.dim as f64;
    let coef = p.sigma * n - 2.0 * p.s;
    let e_part = 4.0 * p.sigma * n * energy;
    if coef == 0.0 {
        e_part
    } else {
        e_part - 2.0 * coef * grad_norm_sq
    }
}

fn gradient(u: &FieldOnGrid, spec: &[Complex64]) -> Vec<Vec<Complex64>> {
    let g = &u.grid;
    (0..g.dim())
        .map(|a| FieldOnGrid::from_spectrum(g, derivative_spectrum(g, spec, a)).values)
        .collect()
}

fn m_phi_from(u: &FieldOnGrid, grad_u: &[Vec<Complex64>], f: &CutoffFields) -> f64 {
    let mut acc = 0.0;
    for i in 0..u.values.len() {
        let mut d = grad_u[0][i] * f.grad[0][i];
        if grad_u.len() > 1 {
            d += grad_u[1][i] * f.grad[1][i];
        }
        acc += (u.values[i].conj() * d).im;
    }
    2.0 * u.grid.cell_volume() * acc
}

/// M_phi[u] with spectral gradient.
pub fn localized_virial(u: &FieldOnGrid, c: &RescaledCutoff) -> Result<f64> {
    let f = cutoff::eval_on_grid(c, &u.grid)?;
    virial_functional(u, &f)
}

/// M_phi[u] for any weight given by its grid fields; only grad phi is read.
pub fn virial_functional(u: &FieldOnGrid, f: &CutoffFields) -> Result<f64> {
    u.check_finite()?;
    if f.grad[0].len() != u.values.len() {
        return Err(Error::InvalidInput("cutoff fields do not match the grid".into()));
    }
    let spec = u.spectrum();
    Ok(m_phi_from(u, &gradient(u, &spec), f))
}

/// Shared state for evaluating virial terms at several radii on one grid.
pub struct VirialEngine {
    pub grid: Grid,
    pub params: FracParams,
    pub rule: MRule,
    pub path: HessianPath,
    cutoffs: Vec<RescaledCutoff>,
    fields: Vec<CutoffFields>,
    psi2_pow: Vec<Vec<f64>>,
    eta: Option<f64>,
}

impl VirialEngine {
    pub fn new(grid: &Grid, params: FracParams, cutoffs: &[RescaledCutoff], q: &MQuadrature) -> Result<Self> {
        if params.dim != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "parameter dimension {} does not match grid dimension {}",
                params.dim,
                grid.dim()
            )));
        }
        let (xmin, xmax) = grid.spectral_range();
        let rule = q.certified_rule(params.s, xmin, xmax)?;
        let mut fields = Vec::new();
        for c in cutoffs {
            fields.push(cutoff::eval_on_grid(c, grid)?);
        }
        Ok(VirialEngine {
            grid: grid.clone(),
            params,
            rule,
            path: HessianPath::Full,
            cutoffs: cutoffs.to_vec(),
            fields,
            psi2_pow: vec![],
            eta: None,
        })
    }

    pub fn with_path(mut self, path: HessianPath) -> Self {
        self.path = path;
        self
    }

    /// Enable the refined psi_1 / psi_2 terms with c(eta).
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("eta must be positive, got {eta}")));
        }
        let n = self.params.dim;
        let expo = n as f64 / (2.0 * self.params.s);
        self.psi2_pow = self
            .cutoffs
            .iter()
            .map(|c| {
                (0..self.grid.len())
                    .map(|i| c.psi2(self.grid.radius(i), n).max(0.0).powf(expo))
                    .collect()
            })
            .collect();
        self.eta = Some(eta);
        Ok(self)
    }

    pub fn radii(&self) -> Vec<f64> {
        self.cutoffs.iter().map(|c| c.radius).collect()
    }

    pub fn cutoffs(&self) -> &[RescaledCutoff] {
        &self.cutoffs
    }

    pub fn cutoff_fields(&self) -> &[CutoffFields] {
        &self.fields
    }

    /// M_phi for every radius.
    pub fn m_phi(&self, u: &FieldOnGrid) -> Vec<f64> {
        let spec = u.spectrum();
        let gu = gradient(u, &spec);
        self.fields.iter().map(|f| m_phi_from(u, &gu, f)).collect()
    }

    /// Full reports for every radius.
    pub fn evaluate(&self, u: &FieldOnGrid) -> Result<Vec<VirialReport>> {
        u.check_finite()?;
        if u.grid != self.grid {
            return Err(Error::InvalidInput("field grid does not match engine grid".into()));
        }
        let p = &self.params;
        let g = &self.grid;
        let n = g.dim();
        let nr = self.cutoffs.len();
        let spec = u.spectrum();
        let grad_sq = {
            let v = fracops::seminorm_from_spectrum(u, &spec, p.s);
            v * v
        };
        let pw = 2.0 * p.sigma + 2.0;
        let upow: Vec<f64> = u.values.iter().map(|v| v.norm().powf(pw)).collect();
        let dv = g.cell_volume();
        let energy = 0.5 * grad_sq - dv * pairwise_sum(&upow) / pw;
        let gu = gradient(u, &spec);
        let cs = resolvent_normalization(p.s);
        let xi2 = g.xi_squared();
        let mean_u = spec[0] / g.len() as f64;
        let a0 = mean_u * cs;

        // Per node: [grad_all, per R: (hess, defect, bih, psi1, psi2pow)].
        let width = 1 + 5 * nr;
        let per_node: Vec<Vec<f64>> = self
            .rule
            .nodes
            .par_iter()
            .zip(self.rule.weights.par_iter())
            .map(|(&m, &w)| {
                let mut sm: Vec<Complex64> = spec
                    .iter()
                    .zip(&xi2)
                    .map(|(v, &x)| v * (cs / (x + m)))
                    .collect();
                let grads: Vec<Vec<Complex64>> = (0..n)
                    .map(|a| FieldOnGrid::from_spectrum(g, derivative_spectrum(g, &sm, a)).values)
                    .collect();
                sm[0] = Complex64::new(0.0, 0.0);
                let wm = FieldOnGrid::from_spectrum(g, sm).values;
                let zero_mode = a0 / m;
                let scale = w * m.powf(p.s) * dv;
                let mut out = vec![0.0; width];
                let mut gsq = vec![0.0; g.len()];
                for i in 0..g.len() {
                    gsq[i] = grads.iter().map(|d| d[i].norm_sqr()).sum();
                }
                out[0] = scale * pairwise_sum(&gsq);
                for r in 0..nr {
                    let f = &self.fields[r];
                    let (mut hs, mut df, mut bh, mut p1, mut p2) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..g.len() {
                        let contraction = match (self.path, n) {
                            (HessianPath::Radial, _) | (_, 1) => f.radial_second[i] * gsq[i],
                            _ => {
                                let h = f.hessian[i];
                                let (gx, gy) = (grads[0][i], grads[1][i]);
                                h[0] * gx.norm_sqr()
                                    + h[2] * gy.norm_sqr()
                                    + 2.0 * h[1] * (gx.conj() * gy).re
                            }
                        };
                        hs += contraction;
                        df += gsq[i] - contraction;
                        // -Delta^2 phi |u_m|^2 integrated by parts once.
                        let mut dl = grads[0][i] * f.grad_laplacian[0][i];
                        if n > 1 {
                            dl += grads[1][i] * f.grad_laplacian[1][i];
                        }
                        bh += ((wm[i] + zero_mode).conj() * dl).re;
                        p1 += (1.0 - f.radial_second[i]) * gsq[i];
                        if let Some(pp) = self.psi2_pow.get(r) {
                            p2 += pp[i] * gsq[i];
                        }
                    }
                    let o = 1 + 5 * r;
                    out[o] = 4.0 * scale * hs;
                    out[o + 1] = 4.0 * scale * df;
                    out[o + 2] = 2.0 * scale * bh;
                    out[o + 3] = 4.0 * scale * p1;
                    out[o + 4] = 4.0 * scale * p2;
                }
                out
            })
            .collect();
        let total = |k: usize| -> f64 {
            let col: Vec<f64> = per_node.iter().map(|v| v[k]).collect();
            pairwise_sum(&col)
        };
        let grad_all = total(0);
        let core = core_identity(p, energy, grad_sq);
        let nlc = 2.0 * p.sigma / (p.sigma + 1.0);
        let mut reports = Vec::with_capacity(nr);
        for r in 0..nr {
            let f = &self.fields[r];
            let o = 1 + 5 * r;
            let hessian_term = total(o);
            let defect = total(o + 1);
            let bih = total(o + 2);
            let mut lap_w = 0.0;
            let mut tail_w = 0.0;
            let mut psi2_w = 0.0;
            for (lap, up) in f.laplacian.iter().zip(&upow) {
                lap_w += lap * up;
                tail_w += (lap - n as f64) * up;
                psi2_w += (n as f64 - lap) * up;
            }
            let nonlinear_term = -nlc * dv * lap_w;
            let tail_nonlinear = -nlc * dv * tail_w;
            let rhs_total = hessian_term + bih + nonlinear_term;
            let residual = rhs_total - (core - defect + bih + tail_nonlinear);
            let mut dec = EstimateDecomposition {
                localization_defect: defect,
                tail_nonlinear,
                core_identity: core,
                biharmonic_term: bih,
                residual,
                plancherel_gap: 4.0 * (grad_all - p.s * grad_sq),
                strauss_scale: None,
                psi1_integral: total(o + 3),
                psi2_pow_integral: 0.0,
                psi2_nonlinear: 0.0,
                eta: self.eta,
            };
            if let Some(eta) = self.eta {
                dec.psi2_pow_integral = c_eta(eta, p.s, n) * total(o + 4);
                dec.psi2_nonlinear = nlc * dv * psi2_w;
            }
            reports.push(VirialReport {
                radius: self.cutoffs[r].radius,
                m_phi: m_phi_from(u, &gu, f),
                hessian_term,
                biharmonic_term: bih,
                nonlinear_term,
                rhs_total,
                energy,
                grad_norm_sq: grad_sq,
                full_rhs: core,
                decomposition: dec,
            });
        }
        Ok(reports)
    }

    /// 4 int int m^s |grad u_m|^2, to compare with 4 s ||(-Delta)^(s/2) u||^2.
    pub fn plancherel_total(&self, u: &FieldOnGrid) -> f64 {
        4.0 * fracops::weighted_gradient_integral_with(u, self.params.s, &self.rule)
    }
}

/// Localized virial identity terms for one cutoff.
pub fn virial_rhs_general(
    u: &FieldOnGrid,
    c: &RescaledCutoff,
    p: &FracParams,
    q: &MQuadrature,
) -> Result<VirialReport> {
    let eng = VirialEngine::new(&u.grid, *p, std::slice::from_ref(c), q)?;
    Ok(eng.evaluate(u)?.remove(0))
}

/// Decomposition rhs_total = core - defect + biharmonic + tail, with the
/// Strauss scale of the tail bound.
pub fn radial_estimate_decomposition(
    u: &FieldOnGrid,
    c: &RescaledCutoff,
    p: &FracParams,
    q: &MQuadrature,
    eps: f64,
) -> Result<EstimateDecomposition> {
    let hi = (2.0 * p.s - 1.0) * p.sigma / p.s;
    if !(eps > 0.0 && eps < hi) {
        return Err(Error::Domain(format!("eps must lie in (0, {hi}), got {eps}")));
    }
    let rep = virial_rhs_general(u, c, p, q)?;
    let mut d = rep.decomposition;
    let n = p.dim as f64;
    d.strauss_scale = Some(
        c.radius.powf(-p.sigma * (n - 1.0) + eps * p.s) * rep.grad_norm_sq.sqrt().powf(p.sigma / p.s + eps),
    );
    Ok(d)
}

/// psi_1 / psi_2 split in the L2-critical case.
pub fn refined_decomposition(
    u: &FieldOnGrid,
    c: &RescaledCutoff,
    p: &FracParams,
    q: &MQuadrature,
    eta: f64,
) -> Result<EstimateDecomposition> {
    if !p.is_l2_critical() {
        return Err(Error::Domain(format!(
            "refined decomposition needs sigma = 2s/N, got sigma = {}, 2s/N = {}",
            p.sigma,
            2.0 * p.s / p.dim as f64
        )));
    }
    let eng = VirialEngine::new(&u.grid, *p, std::slice::from_ref(c), q)?.with_eta(eta)?;
    Ok(eng.evaluate(u)?.remove(0).decomposition)
}

/// beta = 2s/(N - 2s).
pub fn refined_beta(p: &FracParams) -> f64 {
    2.0 * p.s / (p.dim as f64 - 2.0 * p.s)
}

impl EstimateDecomposition {
    /// psi2_nonlinear - psi2_pow_integral + biharmonic: what the refined bound leaves over 8sE.
    pub fn refined_error_terms(&self) -> f64 {
        self.psi2_nonlinear - self.psi2_pow_integral + self.biharmonic_term
    }

    /// psi1_integral - psi2_pow_integral, nonnegative when the cutoff margin is.
    pub fn psi_difference(&self) -> f64 {
        self.psi1_integral - self.psi2_pow_integral
    }
}

/// Largest deviation of u from its square-symmetry images, relative to max |u|.
pub fn radial_asymmetry(u: &FieldOnGrid) -> f64 {
    let g = &u.grid;
    let m = g.points();
    let refl = |j: usize| (m - j) % m;
    let scale = u.max_abs().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for idx in 0..g.len() {
        let v = u.values[idx];
        let images: Vec<usize> = if g.dim() == 1 {
            vec![refl(idx)]
        } else {
            let (i, j) = (idx / m, idx % m);
            vec![refl(i) * m + j, i * m + refl(j), j * m + i]
        };
        for k in images {
            worst = worst.max((u.values[k] - v).norm() / scale);
        }
    }
    worst
}

/// sup_{x != 0} |x|^(N/2 - alpha) |u(x)| / ||(-Delta)^(alpha/2) u|| for radial u.
pub fn strauss_ratio(u: &FieldOnGrid, alpha: f64) -> Result<f64> {
    let n = u.grid.dim() as f64;
    if !(alpha > 0.5 && alpha < n / 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (1/2, N/2), got {alpha}")));
    }
    u.check_finite()?;
    let asym = radial_asymmetry(u);
    if asym > 1e-8 {
        return Err(Error::Symmetry(asym));
    }
    let den = fracops::frac_seminorm(u, alpha)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    let mut sup: f64 = 0.0;
    for i in 0..u.grid.len() {
        let r = u.grid.radius(i);
        if r > 0.0 {
            sup = sup.max(r.powf(n / 2.0 - alpha) * u.values[i].norm());
        }
    }
    Ok(sup / den)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// |M_phi[u]| against || |grad|^(1/2) u ||^2 + ||u|| || |grad|^(1/2) u ||.
pub fn virial_bound_a1(u: &FieldOnGrid, c: &RescaledCutoff) -> Result<BoundReport> {
    let lhs = localized_virial(u, c)?.abs();
    let h = fracops::frac_seminorm(u, 0.5)?;
    let rhs = h * h + u.norm() * h;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(BoundReport { lhs, rhs, ratio })
}

/// |int int m^s Delta^2 phi_R |u_m|^2| against ||Delta^2 phi_R||^s ||Delta phi_R||^(1-s) ||u||^2.
pub fn biharmonic_bound_a2(u: &FieldOnGrid, c: &RescaledCutoff, s: f64, q: &MQuadrature) -> Result<BoundReport> {
    let p = FracParams::new(u.grid.dim(), s, 1.0)?;
    let rep = virial_rhs_general(u, c, &p, q)?;
    let lhs = rep.biharmonic_term.abs();
    let n = u.grid.dim();
    let (mut b4, mut b2): (f64, f64) = (0.0, 0.0);
    for r in c.verification_radii() {
        b4 = b4.max(c.bilaplacian(r, n).abs());
        b2 = b2.max(c.laplacian(r, n).abs());
    }
    let rhs = b4.powf(s) * b2.powf(1.0 - s) * u.norm_sq();
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(BoundReport { lhs, rhs, ratio })
}

/// dM_phi/dt from the equation itself: 2 Im <u_t, grad phi . grad u> + 2 Im <u, grad phi . grad u_t>.
pub fn direct_time_derivative(u: &FieldOnGrid, c: &RescaledCutoff, p: &FracParams) -> Result<f64> {
    u.check_finite()?;
    let f = cutoff::eval_on_grid(c, &u.grid)?;
    let lap = fracops::frac_laplacian(u, p.s)?;
    let vals: Vec<Complex64> = u
        .values
        .iter()
        .zip(&lap.values)
        .map(|(v, l)| -Complex64::i() * (l - v * v.norm().powf(2.0 * p.sigma)))
        .collect();
    let ut = FieldOnGrid::new(&u.grid, vals)?;
    let gu = gradient(u, &u.spectrum());
    let gut = gradient(&ut, &ut.spectrum());
    let dv = u.grid.cell_volume();
    let mut acc = 0.0;
    for i in 0..u.values.len() {
        let mut a = Complex64::new(0.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        for k in 0..gu.len() {
            a += gu[k][i] * f.grad[k][i];
            b += gut[k][i] * f.grad[k][i];
        }
        acc += (ut.values[i].conj() * a).im + (u.values[i].conj() * b).im;
    }
    Ok(2.0 * dv * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::build_profile;

    fn bump(g: &Grid, w: f64, k: f64) -> FieldOnGrid {
        FieldOnGrid::from_fn(g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Complex64::from_polar(1.2 * (-r2 / (w * w)).exp(), k * x[0] + 0.3 * r2)
        })
    }

    #[test]
    fn real_field_has_zero_virial() {
        let g = Grid::new(2, 24.0, 64).unwrap();
        let c = RescaledCutoff::new(&build_profile().unwrap(), 2.0).unwrap();
        let u = FieldOnGrid::from_real(&g, |x| (-(x[0] * x[0] + x[1] * x[1]) / 4.0).exp());
        assert!(localized_virial(&u, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rhs_matches_direct_derivative_1d() {
        let g = Grid::new(1, 40.0, 512).unwrap();
        let c = RescaledCutoff::new(&build_profile().unwrap(), 2.0).unwrap();
        let p = FracParams::new(1, 0.7, 1.0).unwrap();
        let u = bump(&g, 2.0, 0.5);
        let rep = virial_rhs_general(&u, &c, &p, &MQuadrature::default()).unwrap();
        let direct = direct_time_derivative(&u, &c, &p).unwrap();
        assert!((rep.rhs_total - direct).abs() < 1e-4 * direct.abs(), "{} vs {}", rep.rhs_total, direct);
        assert!(rep.decomposition.residual.abs() < 1e-7);
        assert!((rep.decomposition.residual - rep.decomposition.plancherel_gap).abs() < 1e-9);
    }

    #[test]
    fn rhs_matches_direct_derivative_2d_and_paths_agree_for_radial() {
        let g = Grid::new(2, 24.0, 128).unwrap();
        let c = RescaledCutoff::new(&build_profile().unwrap(), 1.5).unwrap();
        let p = FracParams::new(2, 0.8, 1.0).unwrap();
        let q = MQuadrature::default();
        let u = bump(&g, 1.5, 0.7);
        let rep = virial_rhs_general(&u, &c, &p, &q).unwrap();
        let direct = direct_time_derivative(&u, &c, &p).unwrap();
        assert!((rep.rhs_total - direct).abs() < 1e-3 * direct.abs(), "{} vs {}", rep.rhs_total, direct);
        assert!(rep.decomposition.localization_defect >= 0.0);

        let radial = bump(&g, 1.5, 0.0);
        let full = VirialEngine::new(&g, p, std::slice::from_ref(&c), &q).unwrap();
        let rad = VirialEngine::new(&g, p, &[c], &q).unwrap().with_path(HessianPath::Radial);
        let a = full.evaluate(&radial).unwrap()[0].hessian_term;
        let b = rad.evaluate(&radial).unwrap()[0].hessian_term;
        assert!((a - b).abs() < 1e-3 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn strauss_rejects_asymmetric_field() {
        let g = Grid::new(2, 10.0, 32).unwrap();
        let u = bump(&g, 1.0, 0.4);
        assert!(matches!(strauss_ratio(&u, 0.8), Err(Error::Symmetry(_))));
        let r = FieldOnGrid::from_real(&g, |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        assert!(strauss_ratio(&r, 0.8).unwrap() > 0.0);
    }

    #[test]
    fn refined_needs_critical_power() {
        let g = Grid::new(2, 24.0, 64).unwrap();
        let c = RescaledCutoff::new(&build_profile().unwrap(), 2.0).unwrap();
        let u = bump(&g, 1.5, 0.0);
        let p = FracParams::new(2, 0.8, 1.0).unwrap();
        assert!(refined_decomposition(&u, &c, &p, &MQuadrature::default(), 1.0).is_err());
        let pc = FracParams::new(2, 0.8, 0.8).unwrap();
        let d = refined_decomposition(&u, &c, &pc, &MQuadrature::default(), 1.0).unwrap();
        assert!(d.psi1_integral >= 0.0 && d.psi2_pow_integral >= 0.0);
    }
}
