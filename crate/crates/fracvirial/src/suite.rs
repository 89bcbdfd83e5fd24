//! Named acceptance suites. Each returns every measured number with its tolerance.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cutoff::{self, RescaledCutoff};
use crate::domain::{self, DomainRunConfig, DomainState, IntervalDomain};
use crate::error::{Error, Result};
use crate::evolve::{self, EvolveConfig};
use crate::fracops::{self, FracParams};
use crate::grid::{FieldOnGrid, Grid};
use crate::groundstate::{self, Reference};
use crate::quadrature::{balakrishnan_prefactor, MQuadrature};
use crate::virial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SuiteName {
    OperatorIdentities,
    VirialIdentity,
    GroundstateThresholds,
    SupercriticalBlowup,
    CriticalBlowup,
    DomainBlowup,
    CutoffCertificate,
}

impl SuiteName {
    pub const ALL: [SuiteName; 7] = [
        SuiteName::OperatorIdentities,
        SuiteName::VirialIdentity,
        SuiteName::GroundstateThresholds,
        SuiteName::SupercriticalBlowup,
        SuiteName::CriticalBlowup,
        SuiteName::DomainBlowup,
        SuiteName::CutoffCertificate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::OperatorIdentities => "operator-identities",
            SuiteName::VirialIdentity => "virial-identity",
            SuiteName::GroundstateThresholds => "groundstate-thresholds",
            SuiteName::SupercriticalBlowup => "supercritical-blowup",
            SuiteName::CriticalBlowup => "critical-blowup",
            SuiteName::DomainBlowup => "domain-blowup",
            SuiteName::CutoffCertificate => "cutoff-certificate",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    /// Acceptance criterion number this check belongs to.
    pub criterion: u8,
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(criterion: u8, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { criterion, name: name.into(), value, relation: Relation::AtMost, tolerance, passed: value <= tolerance }
    }

    pub fn at_least(criterion: u8, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { criterion, name: name.into(), value, relation: Relation::AtLeast, tolerance, passed: value >= tolerance }
    }

    pub fn flag(criterion: u8, name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(criterion, name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        write!(
            f,
            "[{}] criterion {} {}: {:.6e} {} {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.value,
            rel,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: SuiteName,
    pub passed: bool,
    pub runtime_s: f64,
    pub checks: Vec<Check>,
    pub details: Value,
}

impl SuiteReport {
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

struct Builder {
    checks: Vec<Check>,
    details: serde_json::Map<String, Value>,
}

impl Builder {
    fn new() -> Self {
        Builder { checks: vec![], details: serde_json::Map::new() }
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn detail(&mut self, key: &str, v: impl Serialize) {
        self.details.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn finish(mut self, suite: SuiteName, start: Instant, criteria: &[(u8, f64)]) -> SuiteReport {
        let runtime_s = start.elapsed().as_secs_f64();
        for &(c, limit) in criteria {
            self.checks.push(Check::at_most(c, "runtime seconds", runtime_s, limit));
        }
        SuiteReport {
            suite,
            passed: self.checks.iter().all(|c| c.passed),
            runtime_s,
            checks: self.checks,
            details: Value::Object(self.details),
        }
    }
}

pub fn run_suite(name: SuiteName) -> Result<SuiteReport> {
    match name {
        SuiteName::OperatorIdentities => operator_identities(),
        SuiteName::VirialIdentity => virial_identity(),
        SuiteName::GroundstateThresholds => groundstate_thresholds(),
        SuiteName::SupercriticalBlowup => supercritical_blowup(),
        SuiteName::CriticalBlowup => critical_blowup(),
        SuiteName::DomainBlowup => domain_blowup(),
        SuiteName::CutoffCertificate => cutoff_certificate(),
    }
}

fn rel_l2(a: &FieldOnGrid, b: &FieldOnGrid) -> f64 {
    a.sub(b).norm() / a.norm()
}

fn operator_identities() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Builder::new();
    let q = MQuadrature::default();
    let exps = [0.55, 0.6, 0.75, 0.9];
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut worst_op: f64 = 0.0;
    let mut worst_pl: f64 = 0.0;
    let mut per_field = vec![];
    let mut plancherel_time = 0.0;
    for (dim, points) in [(1usize, 4096usize), (2, 256)] {
        let g = Grid::new(dim, 16.0, points)?;
        for i in 0..20 {
            let s = exps[i % exps.len()];
            let u = FieldOnGrid::band_limited(&g, 0.5, &mut rng);
            let m = fracops::frac_laplacian(&u, s)?;
            let bal = fracops::balakrishnan_apply(&u, s, &q)?;
            let e_op = rel_l2(&m, &bal);
            let t0 = Instant::now();
            let wgi = fracops::weighted_gradient_integral(&u, s, &q)?;
            plancherel_time += t0.elapsed().as_secs_f64();
            let semi = fracops::frac_seminorm(&u, s)?;
            let target = s * semi * semi;
            let e_pl = (wgi - target).abs() / target;
            worst_op = worst_op.max(e_op);
            worst_pl = worst_pl.max(e_pl);
            per_field.push(json!({"dim": dim, "s": s, "operator_rel": e_op, "plancherel_rel": e_pl}));
        }
    }
    b.push(Check::at_most(1, "max relative L2 gap multiplier vs Balakrishnan", worst_op, 1e-6));
    b.push(Check::at_most(2, "max relative Plancherel weight error", worst_pl, 1e-6));
    let rule = q.certified_rule(0.5, 1.0, 16.0)?;
    let weight = balakrishnan_prefactor(0.5) * rule.integrate(|m| m.sqrt() / ((4.0 + m) * (4.0 + m)));
    b.push(Check::at_most(2, "scalar weight at (|xi|, s) = (2, 0.5) minus 0.25, relative", (weight - 0.25).abs() / 0.25, q.rel_tol));
    b.push(Check::at_most(2, "Plancherel evaluation seconds", plancherel_time, 30.0));
    b.detail("fields", per_field);
    b.detail("scalar_weight", weight);
    Ok(b.finish(SuiteName::OperatorIdentities, start, &[(1, 60.0)]))
}

fn virial_identity() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Builder::new();
    let p = FracParams::new(2, 0.8, 1.0)?;
    let g = Grid::new(2, 24.0, 512)?;
    let width = 1.5;
    let a0 = evolve::zero_energy_amplitude(&g, width, &p)?;
    let u0 = evolve::gaussian(&g, 0.5 * a0, width);
    let dt: f64 = 2.5e-4;
    let t0: f64 = 0.5;
    let k0 = (t0 / dt).round() as usize;
    let cfg = EvolveConfig { dt, t_max: t0 + 0.2, radii: vec![2.0], rhs_stride: k0, ..Default::default() };
    let log = evolve::run(&u0, &cfg, &p)?;
    let sample = log.rhs.iter().find(|s| s.index == k0).ok_or_else(|| Error::Consistency("missing sample".into()))?;
    let rhs = sample.reports[0].rhs_total;
    let mut errs = vec![];
    for h in [0.2, 0.1, 0.05] {
        let j = (h / dt).round() as usize;
        let fd = evolve::central_difference(&log.times, &log.m_r[0], k0, j)
            .ok_or_else(|| Error::Consistency("window too short".into()))?;
        errs.push((h, fd, (fd - rhs).abs()));
    }
    b.push(Check::at_least(3, "FD error reduction h 0.2 -> 0.1", errs[0].2 / errs[1].2, 3.5));
    b.push(Check::at_least(3, "FD error reduction h 0.1 -> 0.05", errs[1].2 / errs[2].2, 3.5));
    b.push(Check::at_most(3, "terminal relative error |FD - rhs| / |rhs|", errs[2].2 / rhs.abs(), 1e-3));
    b.push(Check::flag(3, "trajectory stays below the blowup flag", log.blowup.is_none()));
    b.push(Check::at_most(9, "energy drift per unit time (virial trajectory)", log.energy_drift_rate(), 1e-8));
    b.push(Check::at_most(9, "mass drift per unit time (virial trajectory)", log.mass_drift_rate(), 1e-8));
    b.detail("energy0", log.energy[0]);
    b.detail("rhs_total", rhs);
    b.detail("report", &sample.reports[0]);
    b.detail("fd", errs.iter().map(|e| json!({"h": e.0, "fd": e.1, "error": e.2})).collect::<Vec<_>>());
    Ok(b.finish(SuiteName::VirialIdentity, start, &[(3, 600.0)]))
}

fn groundstate_thresholds() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Builder::new();
    let p1 = FracParams::new(1, 0.5, 0.5)?;
    let g1 = Grid::new(1, 2048.0, 1 << 15)?;
    let q1 = groundstate::solve_ground_state(&p1, &g1, 1e-10)?;
    let sup = (0..g1.len())
        .map(|i| {
            let x = g1.coordinate(i);
            (q1.profile.values[i].re - 2.0 / (1.0 + x * x)).abs()
        })
        .fold(0.0, f64::max);
    b.push(Check::at_most(4, "half-wave ground state sup error vs 2/(1+x^2)", sup, 1e-5));

    let p = FracParams::new(2, 0.8, 1.0)?;
    let g = Grid::new(2, 256.0, 4096)?;
    let q = groundstate::solve_ground_state(&p, &g, 1e-10)?;
    let (r1, r2) = groundstate::pohozaev_relative(&q);
    b.push(Check::at_most(4, "Pohozaev residual 1 (relative)", r1.abs(), 1e-6));
    b.push(Check::at_most(4, "Pohozaev residual 2 (relative)", r2.abs(), 1e-6));
    let c = groundstate::gn_constant(&q);
    let t = groundstate::k_constant(&p, c, &q);
    let spread = match &t {
        Ok(t) => {
            let hi = t.k_const.max(t.k_norms).max(t.k_energy);
            let lo = t.k_const.min(t.k_norms).min(t.k_energy);
            (hi - lo) / hi
        }
        Err(_) => f64::INFINITY,
    };
    b.push(Check::at_most(4, "K three-way relative spread", spread, 1e-4));
    let t = t?;
    let t = groundstate::critical_point(&t, &p, q.mass)?;
    let f = groundstate::threshold_function(t.y_max, q.mass, &t, &p)?;
    b.push(Check::at_most(4, "F(y_max) vs (s_c/N) y_max^2, relative", (f - t.f_at_max).abs() / t.f_at_max, 1e-10));
    b.detail("thresholds", &t);
    b.detail("ground_state", json!({
        "energy": q.energy, "mass": q.mass, "grad_norm_sq": q.grad_norm_sq, "lp_norm": q.lp_norm,
        "residual": q.residual, "iterations": q.iterations, "max": q.profile.max_abs(),
    }));
    b.detail("half_wave_sup_error", sup);
    Ok(b.finish(SuiteName::GroundstateThresholds, start, &[(4, 120.0)]))
}

fn cutoff_certificate() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Builder::new();
    let profile = cutoff::build_profile()?;
    let mut worst = f64::INFINITY;
    for r in [1.0, 2.0, 4.0, 8.0, 16.0] {
        worst = worst.min(cutoff::inequality_report(&RescaledCutoff::new(&profile, r)?, 2).min());
    }
    b.push(Check::at_least(5, "min margin of the cutoff inequalities", worst, -1e-12));
    for s in [0.8, 0.9] {
        let eta = cutoff::find_eta(&profile, s, 2);
        let (eta, margin) = match eta {
            Ok(eta) => {
                let mut m = f64::INFINITY;
                for r in [1.0, 4.0, 16.0] {
                    m = m.min(cutoff::verify_psi_inequality(&RescaledCutoff::new(&profile, r)?, eta, s, 2)?.min_margin);
                }
                (eta, m)
            }
            Err(_) => (0.0, f64::NEG_INFINITY),
        };
        b.push(Check::at_least(5, format!("eta* > 0 at (N, s) = (2, {s})"), eta, f64::MIN_POSITIVE));
        b.push(Check::at_least(5, format!("psi inequality margin at (N, s) = (2, {s})"), margin, 0.0));
        b.detail(&format!("eta_s{s}"), eta);
    }
    Ok(b.finish(SuiteName::CutoffCertificate, start, &[(5, 5.0)]))
}

/// Band fraction above which a snapshot no longer represents the continuum flow.
pub const RESOLVED_BAND: f64 = 1e-3;

/// Negative-energy Gaussian run on the large box used by both blowup suites.
fn blowup_run(p: &FracParams, factor: f64, dt: f64, rhs_stride: usize) -> Result<(evolve::RunLog, f64)> {
    let g = Grid::new(2, 168.0, 1024)?;
    let width = 3.0;
    let a0 = evolve::zero_energy_amplitude(&g, width, p)?;
    let u0 = evolve::gaussian(&g, factor * a0, width);
    let cfg = EvolveConfig {
        dt,
        t_max: 20.0,
        radii: vec![4.0, 8.0, 16.0],
        rhs_stride,
        conservation_tol: 1e-3,
        ..Default::default()
    };
    Ok((evolve::run(&u0, &cfg, p)?, factor * a0))
}

fn supercritical_blowup() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Builder::new();
    let p = FracParams::new(2, 0.8, 1.0)?;
    let (log, amp) = blowup_run(&p, 1.5, 2.5e-3, 25)?;
    b.push(Check::at_most(6, "initial energy", log.energy[0], -f64::MIN_POSITIVE));
    b.push(Check::flag(6, "blowup flag raised", log.blowup.is_some()));
    let rep = evolve::monotonicity_report(&log, &p, None, 0.1, 1, RESOLVED_BAND);
    let t_end = *log.times.last().unwrap_or(&0.0);
    let start_fit = log.times.iter().position(|&t| t >= 0.9 * t_end).unwrap_or(0);
    let mut fits = vec![];
    for (i, r) in rep.per_radius.iter().enumerate() {
        b.push(Check::at_least(6, format!("M_R decreasing after transient, R = {}", r.radius), r.decreasing_fraction, 1.0));
        b.push(Check::at_least(6, format!("monotonicity inequality fraction, R = {}", r.radius), r.fraction, 0.99));
        let fit = evolve::fit_collapse(&log.times[start_fit..], &log.m_r[i][start_fit..], p.s);
        let resid = fit.as_ref().map(|f| f.residual).unwrap_or(f64::INFINITY);
        b.push(Check::at_most(6, format!("collapse fit residual on the final decade, R = {}", r.radius), resid, 0.10));
        fits.push(fit.ok());
    }
    let terms: Vec<f64> = rep.per_radius.iter().map(|r| r.max_error_terms).collect();
    b.push(Check::flag(6, "localization error terms shrink as R grows", terms.windows(2).all(|w| w[1] < w[0])));
    b.detail("amplitude", amp);
    b.detail("blowup", log.blowup);
    b.detail("monotonicity", &rep);
    b.detail("fits", fits);
    b.detail("energy_drift_rate", log.energy_drift_rate());
    b.detail("steps", log.steps);
    Ok(b.finish(SuiteName::SupercriticalBlowup, start, &[(6, 900.0)]))
}

fn critical_blowup() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Builder::new();
    let p = FracParams::new(2, 0.8, 0.8)?;
    let (log, amp) = blowup_run(&p, 1.5, 5e-3, 12)?;
    let e0 = log.energy[0];
    b.push(Check::at_most(7, "initial energy", e0, -f64::MIN_POSITIVE));
    let rep = evolve::monotonicity_report(&log, &p, None, 0.1, 1, RESOLVED_BAND);
    let r16 = rep.per_radius.iter().find(|r| r.radius == 16.0).ok_or_else(|| Error::Consistency("no R = 16".into()))?;
    let bound = 4.0 * p.s * e0;
    // Slack needed for FD <= 4 s E0 at the worst snapshot.
    let needed = r16.max_excess.max(0.0);
    b.push(Check::at_most(7, "needed slack / |4 s E0| at R = 16", needed / bound.abs(), 0.05));
    let trend = evolve::growth_exponent(&log.times, &log.grad_norm, 0.5).unwrap_or(f64::NEG_INFINITY);
    b.push(Check::at_least(7, "grad_norm log-log growth slope over the second half", trend, 0.8 * p.s));
    b.detail("amplitude", amp);
    b.detail("blowup", log.blowup);
    b.detail("monotonicity", &rep);
    b.detail("energy_drift_rate", log.energy_drift_rate());
    b.detail("steps", log.steps);
    Ok(b.finish(SuiteName::CriticalBlowup, start, &[(7, 900.0)]))
}

fn domain_blowup() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Builder::new();
    let d = IntervalDomain::new(-1.0, 1.0, 512)?;
    for s in [0.6, 0.8] {
        let op = domain::assemble(&d, s)?;
        b.push(Check::at_least(8, format!("smallest eigenvalue, s = {s}"), op.eigenvalues[0], f64::MIN_POSITIVE));
        b.push(Check::flag(8, format!("eigenvalues nondecreasing, s = {s}"), op.eigenvalues.windows(2).all(|w| w[1] >= w[0])));
        b.push(Check::at_most(8, format!("matrix asymmetry, s = {s}"), op.symmetry_error(), 1e-12));
    }
    let near = domain::assemble(&d, 0.99)?;
    let dirichlet = (std::f64::consts::PI / 2.0).powi(2);
    b.push(Check::at_most(8, "s = 0.99 first eigenvalue vs (pi/2)^2, relative", (near.eigenvalues[0] / dirichlet - 1.0).abs(), 0.05));

    // Pohozaev estimate on random states across three meshes.
    let s = 0.8;
    let sigma = 2.0;
    let mut floors = vec![];
    let mut tols = vec![];
    let mut all_pass = false;
    for m in [255usize, 511, 1023] {
        let dm = IntervalDomain::new(-1.0, 1.0, m)?;
        let op = domain::assemble(&dm, s)?;
        let states = domain::random_bump_states(&dm, 100, 77);
        let checks: Vec<_> = states.iter().map(|u| domain::pohozaev_estimate_check(u, &op)).collect();
        let floor = checks.iter().map(|c| c.slack / c.tol_disc).fold(f64::INFINITY, f64::min);
        let tol = checks.iter().map(|c| c.tol_disc).fold(0.0, f64::max);
        if m == 511 {
            all_pass = checks.iter().all(|c| c.passed);
        }
        floors.push(json!({"points": m, "min_slack_over_tol": floor, "min_slack": checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min), "max_tol_disc": tol}));
        tols.push(tol);
    }
    b.push(Check::flag(8, "Pohozaev slack >= -tol_disc on 100 random states", all_pass));
    b.push(Check::at_least(8, "tol_disc improvement 256 -> 512", tols[0] / tols[1], 1.5));
    b.push(Check::at_least(8, "tol_disc improvement 512 -> 1024", tols[1] / tols[2], 1.5));
    b.detail("pohozaev_refinement", floors);

    let op = domain::assemble(&d, s)?;
    let width = 0.25;
    let a0 = domain::zero_energy_amplitude(&op, width, sigma)?;
    let u0 = DomainState::gaussian(&d, 1.5 * a0, width);
    let cfg = DomainRunConfig { dt: 1e-4, t_max: 5.0, sigma, conservation_tol: 1e-3, ..Default::default() };
    let log = domain::evolve_domain(&u0, &op, &cfg)?;
    b.push(Check::at_most(8, "initial energy", log.energy[0], -f64::MIN_POSITIVE));
    b.push(Check::flag(8, "blowup flag raised", log.blowup.is_some()));
    let rep = domain::monotonicity_omega(&log, s, sigma, 1, 0.1);
    b.push(Check::at_least(8, "M_Omega decreasing after transient", rep.virial_decreasing_fraction, 1.0));
    b.push(Check::at_least(8, "domain virial inequality fraction", rep.fraction, 0.99));
    b.push(Check::at_least(8, "min <u, L u> over the run", rep.min_form, f64::MIN_POSITIVE));
    b.detail("negative_run", json!({"amplitude": 1.5 * a0, "blowup": log.blowup, "steps": log.steps, "report": rep}));

    let calm = DomainState::gaussian(&d, 0.3 * a0, width);
    let cfg = DomainRunConfig { dt: 1e-4, t_max: 1.0, sigma, ..Default::default() };
    let log = domain::evolve_domain(&calm, &op, &cfg)?;
    b.push(Check::at_most(9, "energy drift per unit time (domain run)", log.energy_drift_rate(), 1e-8));
    b.push(Check::at_most(9, "mass drift per unit time (domain run)", log.mass_drift_rate(), 1e-8));
    Ok(b.finish(SuiteName::DomainBlowup, start, &[(8, 600.0)]))
}

/// Used by the CLI `verify virial` command: report and Strauss-ratio summary for a Gaussian.
pub fn virial_snapshot(p: &FracParams, grid: &Grid, radius: f64, amp: f64, width: f64) -> Result<virial::VirialReport> {
    let c = RescaledCutoff::new(&cutoff::build_profile()?, radius)?;
    let u = evolve::gaussian(grid, amp, width);
    virial::virial_rhs_general(&u, &c, p, &MQuadrature::default())
}

/// Blowup-criterion verdict for Gaussian data against the ground state of `p`.
pub fn classify_gaussian(p: &FracParams, grid: &Grid, amp: f64, width: f64, q: &groundstate::GroundState) -> Result<groundstate::CriterionVerdict> {
    groundstate::check_blowup_criterion(&evolve::gaussian(grid, amp, width), p, &Reference::from(q))
}
