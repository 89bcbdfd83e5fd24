//! Quadrature rules for m-integrals over (0, inf).
//!
//! A rule is a list of nodes m_j and weights w_j with
//! int_0^inf f(m) dm ~ sum_j w_j f(m_j). Rules are certified against the
//! closed forms the resolvent integrals reduce to mode by mode.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MScheme {
    /// m = e^t, composite Gauss-Legendre on a truncated t-window.
    ExpPanels,
    /// Central e^t panels plus algebraic maps of [0, m_lo] and [m_hi, inf).
    PowerTails,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MQuadrature {
    pub scheme: MScheme,
    /// Central panels at the coarsest level; 0 picks one panel per four units of t
    /// (two units for ExpPanels).
    pub panels: usize,
    pub nodes_per_panel: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_doublings: usize,
}

impl Default for MQuadrature {
    fn default() -> Self {
        MQuadrature {
            scheme: MScheme::PowerTails,
            panels: 0,
            nodes_per_panel: 10,
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_doublings: 6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// (region, panel index) of every node, used for per-panel residuals.
    pub panel_of: Vec<(u8, usize)>,
    pub level: usize,
}

impl MRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&m, &w)| w * f(m)).sum()
    }

    fn panel_sums(&self, f: &impl Fn(f64) -> f64) -> Vec<((u8, usize), f64)> {
        let mut out: Vec<((u8, usize), f64)> = Vec::new();
        for ((&m, &w), &p) in self.nodes.iter().zip(&self.weights).zip(&self.panel_of) {
            match out.last_mut() {
                Some((q, acc)) if *q == p => *acc += w * f(m),
                _ => out.push((p, w * f(m))),
            }
        }
        out
    }
}

/// sin(pi s)/pi, the square of the resolvent normalization.
pub fn balakrishnan_prefactor(s: f64) -> f64 {
    (PI * s).sin() / PI
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

impl MQuadrature {
    pub fn with_tolerance(rel_tol: f64) -> Self {
        MQuadrature { rel_tol, ..Default::default() }
    }

    fn check(&self, s: f64) -> Result<()> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("m-quadrature needs s in (0,1), got {s}")));
        }
        if self.nodes_per_panel < 2 {
            return Err(Error::InvalidInput("nodes_per_panel must be >= 2".into()));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Rule at refinement `level` for spectral range [xmin, xmax].
    pub fn rule(&self, s: f64, xmin: f64, xmax: f64, level: usize) -> MRule {
        let (gx, gw) = gauss_legendre(self.nodes_per_panel);
        let mut rule = MRule { nodes: vec![], weights: vec![], panel_of: vec![], level };
        let scale = 1usize << level;
        let push_t_panels = |rule: &mut MRule, t0: f64, t1: f64, count: usize, region: u8| {
            let width = (t1 - t0) / count as f64;
            for p in 0..count {
                let a = t0 + p as f64 * width;
                for (&z, &wz) in gx.iter().zip(&gw) {
                    let t = a + 0.5 * width * (z + 1.0);
                    let m = t.exp();
                    rule.nodes.push(m);
                    rule.weights.push(0.5 * width * wz * m);
                    rule.panel_of.push((region, p));
                }
            }
        };
        match self.scheme {
            MScheme::ExpPanels => {
                let lo = ((1.0 / (s * self.abs_tol)).ln() / s).max(0.0);
                let hi = ((1.0 / ((1.0 - s) * self.abs_tol)).ln() / (1.0 - s)).max(0.0);
                let t0 = xmin.ln() - lo;
                let t1 = xmax.ln() + hi;
                let base = if self.panels > 0 { self.panels } else { ((t1 - t0) / 2.0).ceil() as usize };
                push_t_panels(&mut rule, t0, t1, base * scale, 1);
            }
            MScheme::PowerTails => {
                let kappa = 0.01;
                let m_lo = kappa * xmin;
                let m_hi = xmax / kappa;
                let t0 = m_lo.ln();
                let t1 = m_hi.ln();
                let base = if self.panels > 0 { self.panels } else { ((t1 - t0) / 4.0).ceil().max(1.0) as usize };
                // [0, m_lo]: m = m_lo v^(1/s)
                for p in 0..scale {
                    let a = p as f64 / scale as f64;
                    let width = 1.0 / scale as f64;
                    for (&z, &wz) in gx.iter().zip(&gw) {
                        let v = a + 0.5 * width * (z + 1.0);
                        let m = m_lo * v.powf(1.0 / s);
                        let jac = m_lo / s * v.powf(1.0 / s - 1.0);
                        rule.nodes.push(m);
                        rule.weights.push(0.5 * width * wz * jac);
                        rule.panel_of.push((0, p));
                    }
                }
                push_t_panels(&mut rule, t0, t1, base * scale, 1);
                // [m_hi, inf): m = m_hi v^(-1/(1-s))
                let q = 1.0 - s;
                for p in 0..scale {
                    let a = p as f64 / scale as f64;
                    let width = 1.0 / scale as f64;
                    for (&z, &wz) in gx.iter().zip(&gw) {
                        let v = a + 0.5 * width * (z + 1.0);
                        let m = m_hi * v.powf(-1.0 / q);
                        let jac = m_hi / q * v.powf(-1.0 / q - 1.0);
                        rule.nodes.push(m);
                        rule.weights.push(0.5 * width * wz * jac);
                        rule.panel_of.push((2, p));
                    }
                }
            }
        }
        rule
    }

    /// Scalar Balakrishnan integral with doubling refinement.
    pub fn balakrishnan_scalar(&self, x: f64, s: f64) -> Result<f64> {
        self.check(s)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::Domain(format!("balakrishnan_scalar needs x > 0, got {x}")));
        }
        let c2 = balakrishnan_prefactor(s);
        let f = |m: f64| c2 * m.powf(s - 1.0) * x / (x + m);
        let mut prev = self.rule(s, x, x, 0);
        let mut prev_val = prev.integrate(f);
        for level in 1..=self.max_doublings {
            let next = self.rule(s, x, x, level);
            let val = next.integrate(f);
            let diff = (val - prev_val).abs();
            if diff <= self.rel_tol * val.abs() + self.abs_tol {
                return Ok(val);
            }
            if level == self.max_doublings {
                return Err(self.failure(diff / val.abs(), &prev, &next, &f));
            }
            prev = next;
            prev_val = val;
        }
        Ok(prev_val)
    }

    fn failure(&self, achieved: f64, coarse: &MRule, fine: &MRule, f: &impl Fn(f64) -> f64) -> Error {
        let c = coarse.panel_sums(f);
        let fsum = fine.panel_sums(f);
        let per_panel = c
            .iter()
            .map(|((region, p), v)| {
                let children: f64 = fsum
                    .iter()
                    .filter(|((r, q), _)| r == region && (*q == 2 * p || *q == 2 * p + 1))
                    .map(|(_, v)| v)
                    .sum();
                (v - children).abs()
            })
            .collect();
        Error::Quadrature { tol: self.rel_tol, achieved, panels: coarse.len() / self.nodes_per_panel, per_panel }
    }

    /// The scalar identity at x in {0.5, 1, 2, 10}; must pass before any field use.
    pub fn validate(&self, s: f64) -> Result<()> {
        for x in [0.5, 1.0, 2.0, 10.0] {
            let v = self.balakrishnan_scalar(x, s)?;
            let err = (v - x.powf(s)).abs() / x.powf(s);
            if err > self.rel_tol.max(1e-13) * 10.0 {
                return Err(Error::Quadrature { tol: self.rel_tol, achieved: err, panels: 0, per_panel: vec![] });
            }
        }
        Ok(())
    }

    /// Worst relative error of a rule against the closed-form kernels on [xmin, xmax].
    pub fn kernel_error(rule: &MRule, s: f64, xmin: f64, xmax: f64) -> f64 {
        let c2 = balakrishnan_prefactor(s);
        let k = if xmax > xmin * (1.0 + 1e-12) { 9 } else { 1 };
        let xs: Vec<f64> = (0..k)
            .map(|i| (xmin.ln() + (xmax / xmin).ln() * i as f64 / (k.max(2) - 1) as f64).exp())
            .collect();
        let mut worst: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let b = rule.integrate(|m| c2 * m.powf(s - 1.0) * x / (x + m));
            worst = worst.max((b - x.powf(s)).abs() / x.powf(s));
            let p = rule.integrate(|m| c2 * m.powf(s) / ((x + m) * (x + m)));
            let pw = s * x.powf(s - 1.0);
            worst = worst.max((p - pw).abs() / pw);
            let z = rule.integrate(|m| c2 * m.powf(s - 1.0) / (x + m));
            let zw = x.powf(s - 1.0);
            worst = worst.max((z - zw).abs() / zw);
            for &y in xs.iter().skip(i + 1) {
                let q = rule.integrate(|m| c2 * m.powf(s) / ((x + m) * (y + m)));
                let qw = (y.powf(s) - x.powf(s)) / (y - x);
                worst = worst.max((q - qw).abs() / qw);
            }
        }
        worst
    }

    /// Smallest rule (by doubling) whose kernel error on [xmin, xmax] is below rel_tol.
    pub fn certified_rule(&self, s: f64, xmin: f64, xmax: f64) -> Result<MRule> {
        self.check(s)?;
        self.validate(s)?;
        let mut last_err = f64::INFINITY;
        for level in 0..=self.max_doublings {
            let rule = self.rule(s, xmin, xmax, level);
            let err = Self::kernel_error(&rule, s, xmin, xmax);
            if err <= self.rel_tol {
                return Ok(rule);
            }
            last_err = err;
        }
        let coarse = self.rule(s, xmin, xmax, self.max_doublings.saturating_sub(1));
        let fine = self.rule(s, xmin, xmax, self.max_doublings);
        let x = (xmin * xmax).sqrt();
        let c2 = balakrishnan_prefactor(s);
        Err(self.failure(last_err, &coarse, &fine, &|m: f64| c2 * m.powf(s - 1.0) * x / (x + m)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((i - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_examples() {
        let q = MQuadrature::default();
        assert!((q.balakrishnan_scalar(1.0, 0.3).unwrap() - 1.0).abs() < 1e-9);
        assert!((q.balakrishnan_scalar(2.0, 0.5).unwrap() - 2f64.sqrt()).abs() < 1e-9);
        assert!((q.balakrishnan_scalar(10.0, 0.8).unwrap() - 10f64.powf(0.8)).abs() < 1e-8);
    }

    #[test]
    fn exp_panels_also_converge() {
        let q = MQuadrature { scheme: MScheme::ExpPanels, abs_tol: 1e-12, ..Default::default() };
        let v = q.balakrishnan_scalar(3.0, 0.6).unwrap();
        assert!((v - 3f64.powf(0.6)).abs() < 1e-9);
    }

    #[test]
    fn plancherel_weight_closed_form() {
        let q = MQuadrature::default();
        let rule = q.certified_rule(0.5, 4.0, 4.0).unwrap();
        let c2 = balakrishnan_prefactor(0.5);
        let v = rule.integrate(|m| c2 * m.sqrt() / ((4.0 + m) * (4.0 + m)));
        // |xi| = 2, s = 1/2: s |xi|^(2s-2) = 1/4
        assert!((v - 0.25).abs() < 1e-10);
    }

    #[test]
    fn impossible_tolerance_reports_residual() {
        let q = MQuadrature { rel_tol: 1e-30, max_doublings: 1, ..Default::default() };
        match q.balakrishnan_scalar(2.0, 0.4) {
            Err(Error::Quadrature { achieved, per_panel, .. }) => {
                assert!(achieved >= 0.0);
                assert!(!per_panel.is_empty());
            }
            other => panic!("expected quadrature error, got {other:?}"),
        }
    }
}
