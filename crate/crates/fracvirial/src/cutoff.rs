//! Radial virial cutoff.
//!
//! The profile g = phi' is r on [0,1], r - (r-1)^3 on (1, r0] with
//! r0 = 1 + 1/sqrt(3), a decreasing C2 bridge on (r0, 10) and 0 beyond.
//! The rescaled weight is phi_R(r) = R^2 phi(r/R).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const R_OUTER: f64 = 10.0;

pub fn r0() -> f64 {
    1.0 + 1.0 / 3f64.sqrt()
}

/// Polynomial sum_k coeffs[k] (r - start)^k on [start, end).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, r: f64, deriv: usize) -> f64 {
        let t = r - self.start;
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(deriv).rev() {
            let mut f = 1.0;
            for j in 0..deriv {
                f *= (k - j) as f64;
            }
            acc = acc * t + c * f;
        }
        acc
    }

    fn antiderivative(&self, value_at_start: f64) -> Piece {
        let mut c = vec![value_at_start];
        c.extend(self.coeffs.iter().enumerate().map(|(k, &a)| a / (k + 1) as f64));
        Piece { start: self.start, end: self.end, coeffs: c }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BridgeKind {
    /// Single quintic Hermite on (r0, 10) matching (g, g', g'') at both ends.
    QuinticHermite,
    /// Quintic Hermite on (r0, junction] into value * ((10 - r)/(10 - junction))^3.
    HermiteWithCubicTail { junction: f64, value: f64 },
}

impl Default for BridgeKind {
    fn default() -> Self {
        BridgeKind::HermiteWithCubicTail { junction: 3.0, value: 0.25 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub pieces: Vec<Piece>,
    pub phi_pieces: Vec<Piece>,
    pub r0: f64,
    pub r_outer: f64,
    pub bridge: BridgeKind,
}

/// Quintic on [0, d] with prescribed (value, slope, curvature) at both ends.
fn hermite_quintic(d: f64, left: [f64; 3], right: [f64; 3]) -> Result<Vec<f64>> {
    let a0 = left[0];
    let a1 = left[1];
    let a2 = left[2] / 2.0;
    let m = Matrix3::new(
        d.powi(3),
        d.powi(4),
        d.powi(5),
        3.0 * d * d,
        4.0 * d.powi(3),
        5.0 * d.powi(4),
        6.0 * d,
        12.0 * d * d,
        20.0 * d.powi(3),
    );
    let rhs = Vector3::new(
        right[0] - a0 - a1 * d - a2 * d * d,
        right[1] - a1 - 2.0 * a2 * d,
        right[2] - 2.0 * a2,
    );
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Construction("singular Hermite system".into()))?;
    Ok(vec![a0, a1, a2, sol[0], sol[1], sol[2]])
}

pub fn build_profile() -> Result<CutoffProfile> {
    build_profile_with(BridgeKind::default())
}

pub fn build_profile_with(bridge: BridgeKind) -> Result<CutoffProfile> {
    let r0 = r0();
    let a = 1.0 / 3f64.sqrt();
    let left = [r0 - a.powi(3), 1.0 - 3.0 * a * a, -6.0 * a];
    let mut pieces = vec![
        Piece { start: 0.0, end: 1.0, coeffs: vec![0.0, 1.0] },
        Piece { start: 1.0, end: r0, coeffs: vec![1.0, 1.0, 0.0, -1.0] },
    ];
    match bridge {
        BridgeKind::QuinticHermite => {
            let c = hermite_quintic(R_OUTER - r0, left, [0.0, 0.0, 0.0])?;
            pieces.push(Piece { start: r0, end: R_OUTER, coeffs: c });
        }
        BridgeKind::HermiteWithCubicTail { junction, value } => {
            if !(junction > r0 && junction < R_OUTER && value > 0.0 && value < left[0]) {
                return Err(Error::Construction(format!(
                    "bridge junction {junction} / value {value} out of range"
                )));
            }
            let d = R_OUTER - junction;
            let c = value / d.powi(3);
            let right = [value, -3.0 * c * d * d, 6.0 * c * d];
            let q = hermite_quintic(junction - r0, left, right)?;
            pieces.push(Piece { start: r0, end: junction, coeffs: q });
            pieces.push(Piece {
                start: junction,
                end: R_OUTER,
                coeffs: vec![c * d.powi(3), -3.0 * c * d * d, 3.0 * c * d, -c],
            });
        }
    }
    pieces.push(Piece { start: R_OUTER, end: f64::INFINITY, coeffs: vec![0.0] });

    // C2 matching across every junction.
    for w in pieces.windows(2) {
        for k in 0..3 {
            let l = w[0].eval(w[0].end, k);
            let r = w[1].eval(w[1].start, k);
            if (l - r).abs() > 1e-10 * (1.0 + l.abs()) {
                return Err(Error::Construction(format!(
                    "derivative {k} jumps at r = {}: {l} vs {r}",
                    w[1].start
                )));
            }
        }
    }

    // Strict decrease on (r0, 10).
    let n = 10_000;
    for i in 0..n {
        let r = r0 + (R_OUTER - r0) * (i as f64 + 0.5) / n as f64;
        let gp = eval_pieces(&pieces, r, 1);
        if gp >= 0.0 {
            return Err(Error::Construction(format!("bridge is not decreasing: g'({r:.6}) = {gp:.6e}")));
        }
    }

    let mut phi_pieces = Vec::with_capacity(pieces.len());
    let mut acc = 0.0;
    for p in &pieces {
        let ap = p.antiderivative(acc);
        if p.end.is_finite() {
            acc = ap.eval(p.end, 0);
        }
        phi_pieces.push(ap);
    }
    Ok(CutoffProfile { pieces, phi_pieces, r0, r_outer: R_OUTER, bridge })
}

fn locate(pieces: &[Piece], r: f64) -> &Piece {
    pieces.iter().find(|p| r < p.end).unwrap_or_else(|| pieces.last().expect("nonempty profile"))
}

fn eval_pieces(pieces: &[Piece], r: f64, deriv: usize) -> f64 {
    locate(pieces, r).eval(r, deriv)
}

impl CutoffProfile {
    /// g^(k)(r) for r >= 0.
    pub fn g(&self, r: f64, deriv: usize) -> f64 {
        eval_pieces(&self.pieces, r, deriv)
    }

    pub fn phi(&self, r: f64) -> f64 {
        eval_pieces(&self.phi_pieces, r, 0)
    }

    /// Junction radii of the base profile.
    pub fn junctions(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.start).collect()
    }
}

#[derive(Clone, Debug)]
pub struct RescaledCutoff {
    pub base: CutoffProfile,
    pub radius: f64,
}

impl RescaledCutoff {
    pub fn new(base: &CutoffProfile, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("cutoff radius must be positive, got {radius}")));
        }
        Ok(RescaledCutoff { base: base.clone(), radius })
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.radius * self.radius * self.base.phi(r / self.radius)
    }

    /// k-th radial derivative of phi_R, k = 0..4.
    pub fn d(&self, r: f64, k: usize) -> f64 {
        if k == 0 {
            return self.phi(r);
        }
        let rr = self.radius;
        self.base.g(r / rr, k - 1) * rr.powi(2 - k as i32)
    }

    pub fn laplacian(&self, r: f64, n: usize) -> f64 {
        if r < self.radius {
            return n as f64;
        }
        self.d(r, 2) + (n as f64 - 1.0) * self.d(r, 1) / r
    }

    pub fn bilaplacian(&self, r: f64, n: usize) -> f64 {
        if r < self.radius {
            return 0.0;
        }
        let nn = n as f64;
        self.d(r, 4) + 2.0 * (nn - 1.0) * self.d(r, 3) / r + (nn - 1.0) * (nn - 3.0) * self.d(r, 2) / (r * r)
            - (nn - 1.0) * (nn - 3.0) * self.d(r, 1) / (r * r * r)
    }

    /// Radial derivative of Delta phi_R; continuous because g is C2.
    pub fn laplacian_slope(&self, r: f64, n: usize) -> f64 {
        if r < self.radius {
            return 0.0;
        }
        self.d(r, 3) + (n as f64 - 1.0) * (self.d(r, 2) / r - self.d(r, 1) / (r * r))
    }

    /// 1 - phi_R''.
    pub fn psi1(&self, r: f64) -> f64 {
        1.0 - self.d(r, 2)
    }

    /// N - Delta phi_R.
    pub fn psi2(&self, r: f64, n: usize) -> f64 {
        n as f64 - self.laplacian(r, n)
    }

    /// 10 R.
    pub fn support(&self) -> f64 {
        self.base.r_outer * self.radius
    }

    /// Verification radii: 1e4 uniform points on [0, 12R] plus every junction.
    pub fn verification_radii(&self) -> Vec<f64> {
        let n = 10_000;
        let mut r: Vec<f64> = (0..=n).map(|i| 12.0 * self.radius * i as f64 / n as f64).collect();
        for j in self.base.junctions() {
            r.push(j * self.radius);
        }
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        r
    }
}

/// Samples of phi_R and its derivatives on a periodic grid.
#[derive(Clone, Debug)]
pub struct CutoffFields {
    pub phi: Vec<f64>,
    /// grad phi_R, one vector per axis (the second is zero in 1D).
    pub grad: [Vec<f64>; 2],
    /// Hessian entries (xx, xy, yy).
    pub hessian: Vec<[f64; 3]>,
    /// phi_R'' (radial second derivative).
    pub radial_second: Vec<f64>,
    pub laplacian: Vec<f64>,
    pub bilaplacian: Vec<f64>,
    /// grad Delta phi_R.
    pub grad_laplacian: [Vec<f64>; 2],
}

pub fn eval_on_grid(c: &RescaledCutoff, grid: &Grid) -> Result<CutoffFields> {
    if c.support() > grid.half_length() {
        return Err(Error::Support { support: c.support(), half_length: grid.half_length() });
    }
    let n = grid.dim();
    let len = grid.len();
    let mut out = CutoffFields {
        phi: vec![0.0; len],
        grad: [vec![0.0; len], vec![0.0; len]],
        hessian: vec![[0.0; 3]; len],
        radial_second: vec![0.0; len],
        laplacian: vec![0.0; len],
        bilaplacian: vec![0.0; len],
        grad_laplacian: [vec![0.0; len], vec![0.0; len]],
    };
    for i in 0..len {
        let x = grid.position(i);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let d1 = c.d(r, 1);
        let d2 = c.d(r, 2);
        out.phi[i] = c.phi(r);
        out.radial_second[i] = d2;
        out.laplacian[i] = c.laplacian(r, n);
        out.bilaplacian[i] = c.bilaplacian(r, n);
        if r < c.radius {
            out.grad[0][i] = x[0];
            out.grad[1][i] = x[1];
            out.hessian[i] = if n == 1 { [1.0, 0.0, 0.0] } else { [1.0, 0.0, 1.0] };
            continue;
        }
        let (ux, uy) = (x[0] / r, x[1] / r);
        let sl = c.laplacian_slope(r, n);
        out.grad_laplacian[0][i] = sl * ux;
        out.grad_laplacian[1][i] = sl * uy;
        out.grad[0][i] = d1 * ux;
        out.grad[1][i] = d1 * uy;
        if n == 1 {
            out.hessian[i] = [d2, 0.0, 0.0];
        } else {
            let a = d1 / r;
            out.hessian[i] = [a + (d2 - a) * ux * ux, (d2 - a) * ux * uy, a + (d2 - a) * uy * uy];
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiReport {
    pub min_margin: f64,
    pub arg_min: f64,
}

/// c(eta) = eta / (N + 2s).
pub fn c_eta(eta: f64, s: f64, n: usize) -> f64 {
    eta / (n as f64 + 2.0 * s)
}

pub fn psi_margin(c: &RescaledCutoff, eta: f64, s: f64, n: usize, r: f64) -> f64 {
    let p2 = c.psi2(r, n).max(0.0);
    c.psi1(r) - c_eta(eta, s, n) * p2.powf(n as f64 / (2.0 * s))
}

pub fn verify_psi_inequality(c: &RescaledCutoff, eta: f64, s: f64, n: usize) -> Result<PsiReport> {
    if (n as f64) / (2.0 * s) < 1.0 {
        return Err(Error::Domain(format!("need N/(2s) >= 1, got N = {n}, s = {s}")));
    }
    let mut rep = PsiReport { min_margin: f64::INFINITY, arg_min: 0.0 };
    for r in c.verification_radii() {
        let m = psi_margin(c, eta, s, n, r);
        if m < rep.min_margin {
            rep.min_margin = m;
            rep.arg_min = r;
        }
    }
    Ok(rep)
}

/// Margin below which a value counts as a violation (roundoff allowance).
pub const MARGIN_FLOOR: f64 = -1e-12;

/// Largest admissible eta (bisection) times 0.9.
pub fn find_eta(profile: &CutoffProfile, s: f64, n: usize) -> Result<f64> {
    let unit = RescaledCutoff::new(profile, 1.0)?;
    let other = RescaledCutoff::new(profile, 7.0)?;
    let ok = |eta: f64| -> Result<bool> { Ok(verify_psi_inequality(&unit, eta, s, n)?.min_margin >= MARGIN_FLOOR) };
    let cap = 1e6;
    let mut hi = 1.0;
    while ok(hi)? {
        hi *= 2.0;
        if hi > cap {
            return Ok(0.9 * cap);
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo < 1e-8 {
        return Err(Error::Construction(format!("no admissible eta above 1e-8 (found {lo:e})")));
    }
    let eta = 0.9 * lo;
    for c in [&unit, &other] {
        let m = verify_psi_inequality(c, eta, s, n)?.min_margin;
        if m < MARGIN_FLOOR {
            return Err(Error::Consistency(format!("eta = {eta} fails at R = {}: margin {m:e}", c.radius)));
        }
    }
    Ok(eta)
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityReport {
    /// min of 1 - phi_R''
    pub one_minus_second: f64,
    /// min of 1 - phi_R'/r
    pub one_minus_first_over_r: f64,
    /// min of N - Delta phi_R
    pub n_minus_laplacian: f64,
    /// min of 1 - phi'' for the unscaled profile
    pub base_second_bound: f64,
}

impl InequalityReport {
    pub fn min(&self) -> f64 {
        self.one_minus_second
            .min(self.one_minus_first_over_r)
            .min(self.n_minus_laplacian)
            .min(self.base_second_bound)
    }
}

pub fn inequality_report(c: &RescaledCutoff, n: usize) -> InequalityReport {
    let mut rep = InequalityReport {
        one_minus_second: f64::INFINITY,
        one_minus_first_over_r: f64::INFINITY,
        n_minus_laplacian: f64::INFINITY,
        base_second_bound: f64::INFINITY,
    };
    for r in c.verification_radii() {
        rep.one_minus_second = rep.one_minus_second.min(1.0 - c.d(r, 2));
        let q = if r < c.radius { 0.0 } else { 1.0 - c.d(r, 1) / r };
        rep.one_minus_first_over_r = rep.one_minus_first_over_r.min(q);
        rep.n_minus_laplacian = rep.n_minus_laplacian.min(c.psi2(r, n));
        rep.base_second_bound = rep.base_second_bound.min(1.0 - c.base.g(r / c.radius, 1));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_values() {
        let p = build_profile().unwrap();
        assert!((p.phi(0.5) - 0.125).abs() < 1e-15);
        assert!((p.g(0.5, 0) - 0.5).abs() < 1e-15);
        let r0 = r0();
        assert!((p.g(r0, 0) - 1.384_900_179_459_75).abs() < 1e-12);
        assert!(p.g(r0, 1).abs() < 1e-13);
        assert!((p.g(r0, 2) + 2.0 * 3f64.sqrt()).abs() < 1e-12);
        for r in [1.1, 1.3, 1.5] {
            let c = RescaledCutoff::new(&p, 1.0).unwrap();
            assert!((c.psi1(r) - 3.0 * (r - 1.0) * (r - 1.0)).abs() < 1e-13);
        }
        assert_eq!(p.g(10.0, 0), 0.0);
        assert_eq!(p.g(25.0, 1), 0.0);
    }

    #[test]
    fn single_quintic_bridge_is_rejected() {
        match build_profile_with(BridgeKind::QuinticHermite) {
            Err(Error::Construction(msg)) => assert!(msg.contains("not decreasing")),
            other => panic!("expected construction error, got {other:?}"),
        }
    }

    #[test]
    fn piece_evaluation_matches_expansion() {
        let p = Piece { start: 2.0, end: 3.0, coeffs: vec![1.0, -2.0, 0.5, 3.0] };
        let t: f64 = 0.3;
        assert!((p.eval(2.3, 0) - (1.0 - 2.0 * t + 0.5 * t * t + 3.0 * t.powi(3))).abs() < 1e-14);
        assert!((p.eval(2.3, 1) - (-2.0 + t + 9.0 * t * t)).abs() < 1e-14);
        assert!((p.eval(2.3, 2) - (1.0 + 18.0 * t)).abs() < 1e-14);
        assert!((p.eval(2.3, 3) - 18.0).abs() < 1e-14);
    }

    #[test]
    fn c_eta_example() {
        assert!((c_eta(0.1, 0.8, 2) - 0.027777777777777776).abs() < 1e-15);
    }

    #[test]
    fn support_error() {
        let p = build_profile().unwrap();
        let c = RescaledCutoff::new(&p, 4.0).unwrap();
        let g = Grid::new(2, 30.0, 32).unwrap();
        assert!(matches!(eval_on_grid(&c, &g), Err(Error::Support { .. })));
    }
}
