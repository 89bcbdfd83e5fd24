use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use fracvirial::cutoff::{self, RescaledCutoff};
use fracvirial::domain::{self, DomainRunConfig, DomainState, IntervalDomain};
use fracvirial::evolve::{self, EvolveConfig};
use fracvirial::fracops::FracParams;
use fracvirial::groundstate;
use fracvirial::io;
use fracvirial::suite::{self, SuiteName};
use fracvirial::{FieldOnGrid, Grid};

use crate::config::{ConfigFile, List, Resolver};
use crate::{Cli, CliError, Command, CutoffArgs, DomainArgs, EvolveArgs, GroundstateArgs, VerifyCommand, VirialArgs};

/// Output directory plus the list of artifacts written so far.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir, files: vec![] })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let f = File::create(self.dir.join(name)).map_err(fracvirial::Error::from)?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(v).expect("json values serialize");
        fs::write(self.dir.join(name), text + "\n").map_err(fracvirial::Error::from)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

struct Context<'a> {
    resolver: Resolver<'a>,
    out: Outputs,
    seed: u64,
    subcommand: &'static str,
    threads: Option<usize>,
}

impl<'a> Context<'a> {
    fn new(cli: &Cli, file: &'a ConfigFile, section: &'static str, threads: Option<usize>) -> Result<Self, CliError> {
        let mut resolver = Resolver::new(file, section);
        let dir: String = resolver.value("output_dir", cli.output_dir.as_ref().map(|p| p.display().to_string()), "out".into())?;
        // The location does not affect any output, so it stays out of the manifest.
        resolver.resolved.remove("output_dir");
        let seed = resolver.value("seed", cli.seed, 0u64)?;
        Ok(Context { resolver, out: Outputs::new(PathBuf::from(dir))?, seed, subcommand: section, threads })
    }

    /// Echo of the resolved configuration; identical manifests give identical outputs.
    fn finish(&mut self, status: &str) -> Result<(), CliError> {
        let config: BTreeMap<_, _> = self.resolver.resolved.clone();
        let mut files = self.out.files.clone();
        files.sort();
        let manifest = json!({
            "artifact": "fracvirial",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "seed": self.seed,
            "threads": self.threads,
            "config": config,
            "outputs": files,
            "status": status,
        });
        self.out.json("manifest.json", &manifest)
    }
}

/// Runs the subcommand and always writes the manifest; a failed check becomes exit status 1.
pub fn dispatch(cli: Cli, file: &ConfigFile, threads: Option<usize>) -> Result<(), CliError> {
    let section = match &cli.command {
        Command::Verify { .. } => "verify",
        Command::Groundstate(_) => "groundstate",
        Command::Evolve(_) => "evolve",
        Command::Domain(_) => "domain",
        Command::Cutoff(_) => "cutoff",
        Command::Suite { .. } => "suite",
    };
    let mut ctx = Context::new(&cli, file, section, threads)?;
    let outcome = match &cli.command {
        Command::Verify { what: VerifyCommand::Virial(a) } => verify_virial(&mut ctx, a),
        Command::Groundstate(a) => groundstate_cmd(&mut ctx, a),
        Command::Evolve(a) => evolve_cmd(&mut ctx, a),
        Command::Domain(a) => domain_cmd(&mut ctx, a),
        Command::Cutoff(a) => cutoff_cmd(&mut ctx, a),
        Command::Suite { name } => suite_cmd(&mut ctx, name),
    };
    match outcome {
        Ok(None) => ctx.finish("pass"),
        Ok(Some(msg)) => {
            ctx.finish("fail")?;
            Err(CliError::Check(msg))
        }
        Err(e) => {
            // Best effort: the original error is what the caller needs to see.
            let _ = ctx.finish(&format!("error: {e}"));
            Err(e)
        }
    }
}

type Outcome = Result<Option<String>, CliError>;

fn verify_virial(ctx: &mut Context, a: &VirialArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let s = r.required("s", a.s)?;
    let sigma = r.required("sigma", a.sigma)?;
    let dim = r.value("dim", a.dim, 2)?;
    let radius = r.value("R", a.radius, 2.0)?;
    let eta = r.optional("eta", a.eta)?;
    let eps = r.optional("eps", a.eps)?;
    let points = r.value("grid", a.grid, 256)?;
    let tol = r.value("tol", a.tol, 1e-3)?;
    let half_length = r.value("half_length", a.half_length, 24.0)?;
    let width = r.value("width", a.width, 1.5)?;
    let dt: f64 = r.value("dt", a.dt, 2.5e-4)?;
    let t0: f64 = r.value("t0", a.t0, 0.5)?;
    let steps = r.value("steps", a.steps.clone(), List(vec![0.2, 0.1, 0.05]))?;
    let amp_flag = r.optional("amp", a.amp)?;

    let p = FracParams::new(dim, s, sigma)?;
    let g = Grid::new(dim, half_length, points)?;
    let amp = match amp_flag {
        Some(v) => v,
        None => 0.5 * evolve::zero_energy_amplitude(&g, width, &p)?,
    };
    if steps.0.is_empty() || steps.0.iter().any(|&h| !(h >= dt)) {
        return Err(CliError::Usage("steps must be non-empty and each at least dt".into()));
    }
    let h_max = steps.0.iter().cloned().fold(0.0, f64::max);
    let k0 = (t0 / dt).round() as usize;
    let u0 = evolve::gaussian(&g, amp, width);
    let cfg = EvolveConfig { dt, t_max: t0 + h_max, radii: vec![radius], eta, eps, rhs_stride: k0.max(1), ..Default::default() };
    let log = evolve::run(&u0, &cfg, &p)?;
    let sample = log
        .rhs
        .iter()
        .find(|smp| smp.index == k0)
        .ok_or_else(|| CliError::Usage(format!("no right-hand side sample at t0 = {t0}")))?;
    let report = &sample.reports[0];
    let rhs = report.rhs_total;
    let mut rows = vec![];
    for &h in &steps.0 {
        let j = (h / dt).round() as usize;
        let fd = evolve::central_difference(&log.times, &log.m_r[0], k0, j)
            .ok_or_else(|| CliError::Usage(format!("difference window {h} does not fit around t0")))?;
        rows.push(vec![h, fd, rhs, (fd - rhs).abs(), (fd - rhs).abs() / rhs.abs()]);
    }
    io::write_table(ctx.out.create("fd_sweep.csv")?, &["h", "fd", "rhs_total", "abs_error", "rel_error"], rows.clone())?;
    let terminal = rows.last().map(|r| r[4]).unwrap_or(f64::INFINITY);
    ctx.out.json(
        "virial_report.json",
        &json!({
            "time": sample.time,
            "amplitude": amp,
            "report": report,
            "terminal_relative_error": terminal,
            "tolerance": tol,
            "energy_drift_rate": log.energy_drift_rate(),
            "mass_drift_rate": log.mass_drift_rate(),
        }),
    )?;
    println!("rhs_total {rhs:.12e}, terminal relative FD error {terminal:.3e} (tol {tol:.1e})");
    let failure = (!(terminal <= tol)).then(|| format!("relative FD error {terminal:e} exceeds {tol:e}"));
    Ok(failure)
}

fn groundstate_cmd(ctx: &mut Context, a: &GroundstateArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let dim = r.value("N", a.dim, 1)?;
    let s = r.required("s", a.s)?;
    let sigma = r.required("sigma", a.sigma)?;
    let points = r.value("grid", a.grid, if dim == 1 { 8192 } else { 512 })?;
    let tol = r.value("tol", a.tol, 1e-10)?;
    let half_length = r.value("half_length", a.half_length, if dim == 1 { 512.0 } else { 64.0 })?;

    let p = FracParams::new(dim, s, sigma)?;
    let g = Grid::new(dim, half_length, points)?;
    let q = groundstate::solve_ground_state(&p, &g, tol)?;
    io::write_field(ctx.out.create("ground_state.field")?, &q.profile, s, sigma)?;
    let h = g.spacing();
    let mut profile: Vec<(f64, f64)> = (0..g.len())
        .filter_map(|i| {
            let x = g.position(i);
            (x[0] >= 0.0 && (dim == 1 || x[1].abs() < 0.5 * h)).then(|| (x[0], q.profile.values[i].re))
        })
        .collect();
    profile.sort_by(|u, v| u.0.total_cmp(&v.0));
    io::write_table(ctx.out.create("radial_profile.csv")?, &["r", "q"], profile.iter().map(|&(r, v)| vec![r, v]))?;

    let (p1, p2) = groundstate::pohozaev_residuals(&q);
    let (r1, r2) = groundstate::pohozaev_relative(&q);
    let c_gn = groundstate::gn_constant(&q);
    let thresholds = groundstate::k_constant(&p, c_gn, &q).and_then(|t| {
        if p.s_c() > 0.0 {
            groundstate::critical_point(&t, &p, q.mass)
        } else {
            Ok(t)
        }
    });
    let (thr_json, failure) = match &thresholds {
        Ok(t) => (json!(t), None),
        Err(e) => (json!({ "error": e.to_string() }), Some(e.to_string())),
    };
    ctx.out.json(
        "constants.json",
        &json!({
            "params": p,
            "gn_constant": c_gn,
            "thresholds": thr_json,
            "energy": q.energy,
            "mass": q.mass,
            "grad_norm_sq": q.grad_norm_sq,
            "lp_norm": q.lp_norm,
            "equation_residual": q.residual,
            "pohozaev_residuals": [p1, p2],
            "pohozaev_relative": [r1, r2],
            "iterations": q.iterations,
            "max": q.profile.max_abs(),
        }),
    )?;
    println!("E[Q] {:.12e}, M[Q] {:.12e}, C_GN {:.12e}, residual {:.2e}", q.energy, q.mass, c_gn, q.residual);
    Ok(failure)
}

fn evolve_cmd(ctx: &mut Context, a: &EvolveArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let dim = r.value("N", a.dim, 2)?;
    let s = r.required("s", a.s)?;
    let sigma = r.required("sigma", a.sigma)?;
    let amp_flag = r.optional("amp", a.amp)?;
    let width = r.value("width", a.width, 1.5)?;
    let dt = r.value("dt", a.dt, 1e-3)?;
    let t_max = r.value("tmax", a.tmax, 1.0)?;
    let radii = r.value("R", a.radii.clone(), List::default())?;
    let points = r.value("grid", a.grid, 256)?;
    let half_length = r.value("half_length", a.half_length, 32.0)?;
    let noise = r.value("noise", a.noise, 0.0)?;
    let rhs_stride = r.value("rhs_stride", a.rhs_stride, 0)?;
    let snapshot_stride = r.value("snapshot_stride", a.snapshot_stride, 1)?;
    let conservation_tol = r.value("conservation_tol", a.conservation_tol, 1e-8)?;
    let amp_factor = if amp_flag.is_none() { Some(r.value("amp_factor", a.amp_factor, 1.0)?) } else { None };

    let p = FracParams::new(dim, s, sigma)?;
    let g = Grid::new(dim, half_length, points)?;
    let amp = match (amp_flag, amp_factor) {
        (Some(v), _) => v,
        (None, f) => f.unwrap_or(1.0) * evolve::zero_energy_amplitude(&g, width, &p)?,
    };
    let mut u0 = evolve::gaussian(&g, amp, width);
    if noise != 0.0 {
        // Relative modulation keeps the perturbation inside the Gaussian envelope.
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let bump = FieldOnGrid::band_limited(&g, 0.25, &mut rng);
        let scale = noise / bump.max_abs();
        for (v, b) in u0.values.iter_mut().zip(&bump.values) {
            *v *= Complex64::new(1.0, 0.0) + b * scale;
        }
    }
    let cfg = EvolveConfig {
        dt,
        t_max,
        radii: radii.0.clone(),
        rhs_stride,
        snapshot_stride,
        conservation_tol,
        ..Default::default()
    };
    let log = evolve::run(&u0, &cfg, &p)?;
    io::run_log_csv(ctx.out.create("run_log.csv")?, &log)?;
    if !log.rhs.is_empty() {
        io::rhs_csv(ctx.out.create("rhs.csv")?, &log)?;
    }
    if let Some(u) = &log.final_state {
        io::write_field(ctx.out.create("final_state.field")?, u, s, sigma)?;
    }
    let t_end = log.times.last().copied().unwrap_or(0.0);
    let fits: Vec<Value> = if log.blowup.is_some() {
        let from = log.times.iter().position(|&t| t >= 0.5 * t_end).unwrap_or(0);
        log.m_r
            .iter()
            .zip(&log.radii)
            .map(|(series, radius)| match evolve::fit_collapse(&log.times[from..], &series[from..], s) {
                Ok(f) => json!({ "radius": radius, "fit": f }),
                Err(e) => json!({ "radius": radius, "error": e.to_string() }),
            })
            .collect()
    } else {
        vec![]
    };
    let verdict = if log.blowup.is_some() { "blowup flag raised" } else { "no blowup flag" };
    ctx.out.json(
        "summary.json",
        &json!({
            "verdict": verdict,
            "blowup": log.blowup,
            "amplitude": amp,
            "energy0": log.energy.first(),
            "mass0": log.mass.first(),
            "t_end": t_end,
            "steps": log.steps,
            "energy_drift_rate": log.energy_drift_rate(),
            "mass_drift_rate": log.mass_drift_rate(),
            "growth_exponent": evolve::growth_exponent(&log.times, &log.grad_norm, 0.5 * t_end),
            "fits": fits,
        }),
    )?;
    println!("{verdict} at t = {t_end:.6}, E0 {:.6e}, steps {}", log.energy[0], log.steps);
    Ok(None)
}

fn domain_cmd(ctx: &mut Context, a: &DomainArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let lo = r.value("a", a.a, -1.0)?;
    let hi = r.value("b", a.b, 1.0)?;
    let points = r.value("M", a.points, 511)?;
    let s = r.required("s", a.s)?;
    let sigma = r.required("sigma", a.sigma)?;
    let amp_flag = r.optional("amp", a.amp)?;
    let width = r.value("width", a.width, 0.25)?;
    let dt = r.value("dt", a.dt, 1e-4)?;
    let t_max = r.value("tmax", a.tmax, 0.5)?;
    let conservation_tol = r.value("conservation_tol", a.conservation_tol, 1e-8)?;
    let amp_factor = if amp_flag.is_none() { Some(r.value("amp_factor", a.amp_factor, 1.0)?) } else { None };

    let dom = IntervalDomain::new(lo, hi, points)?;
    let op = domain::assemble(&dom, s)?;
    let amp = match amp_flag {
        Some(v) => v,
        None => amp_factor.unwrap_or(1.0) * domain::zero_energy_amplitude(&op, width, sigma)?,
    };
    io::write_table(
        ctx.out.create("eigenvalues.csv")?,
        &["k", "lambda"],
        op.eigenvalues.iter().enumerate().map(|(k, &l)| vec![(k + 1) as f64, l]),
    )?;
    let u0 = DomainState::gaussian(&dom, amp, width);
    let cfg = DomainRunConfig { dt, t_max, sigma, conservation_tol, ..Default::default() };
    let log = domain::evolve_domain(&u0, &op, &cfg)?;
    io::domain_log_csv(ctx.out.create("run_log.csv")?, &log)?;
    let initial = domain::pohozaev_estimate_check(&u0, &op);
    let eigen = domain::pohozaev_estimate_check(&op.eigenfunction(0), &op);
    let mono = domain::monotonicity_omega(&log, s, sigma, 1, 0.0);
    ctx.out.json(
        "pohozaev.json",
        &json!({
            "initial_state": initial,
            "first_eigenfunction": eigen,
            "lambda1": op.eigenvalues[0],
            "amplitude": amp,
            "energy0": log.energy.first(),
            "blowup": log.blowup,
            "monotonicity": mono,
            "energy_drift_rate": log.energy_drift_rate(),
            "mass_drift_rate": log.mass_drift_rate(),
        }),
    )?;
    println!("lambda1 {:.12e}, Pohozaev slack {:.3e} (tol {:.3e})", op.eigenvalues[0], initial.slack, initial.tol_disc);
    let failure = (!(initial.passed && eigen.passed)).then(|| {
        format!("Pohozaev slack below -tol_disc: initial {:e}, eigenfunction {:e}", initial.slack, eigen.slack)
    });
    Ok(failure)
}

fn cutoff_cmd(ctx: &mut Context, a: &CutoffArgs) -> Outcome {
    let r = &mut ctx.resolver;
    let radius = r.value("R", a.radius, 1.0)?;
    let s = r.value("s", a.s, 0.8)?;
    let dim = r.value("N", a.dim, 2)?;

    let profile = cutoff::build_profile()?;
    let c = RescaledCutoff::new(&profile, radius)?;
    let eta = cutoff::find_eta(&profile, s, dim)?;
    let ineq = cutoff::inequality_report(&c, dim);
    let psi = cutoff::verify_psi_inequality(&c, eta, s, dim)?;
    let rows = c.verification_radii().into_iter().map(|x| {
        vec![
            x,
            profile.g(x / radius, 0),
            profile.g(x / radius, 1),
            c.phi(x),
            c.d(x, 2),
            c.psi1(x),
            c.psi2(x, dim),
            cutoff::psi_margin(&c, eta, s, dim, x),
        ]
    });
    io::write_table(ctx.out.create("cutoff.csv")?, &["r", "g", "g_prime", "phi", "phi_second", "psi1", "psi2", "margin"], rows)?;
    ctx.out.json("profile.json", &json!(profile))?;
    ctx.out.json("certificate.json", &json!({ "eta": eta, "inequalities": ineq, "min_inequality": ineq.min(), "psi": psi }))?;
    println!("eta* {eta:.6e}, min inequality margin {:.3e}, min psi margin {:.3e}", ineq.min(), psi.min_margin);
    let failure = (ineq.min() < -1e-12 || psi.min_margin < 0.0)
        .then(|| format!("cutoff margins negative: inequalities {:e}, psi {:e}", ineq.min(), psi.min_margin));
    Ok(failure)
}

fn suite_cmd(ctx: &mut Context, name: &str) -> Outcome {
    let names: Vec<SuiteName> = if name == "all" {
        SuiteName::ALL.to_vec()
    } else {
        vec![name.parse().map_err(|e: fracvirial::Error| CliError::Usage(e.to_string()))?]
    };
    ctx.resolver.resolved.insert("name".into(), name.to_string());
    let mut failure = None;
    for n in names {
        let rep = suite::run_suite(n)?;
        for c in &rep.checks {
            println!("{c}");
        }
        ctx.out.json(&format!("{n}.json"), &json!(rep))?;
        if let (None, Some(c)) = (&failure, rep.first_failure()) {
            failure = Some(format!("{n}: {c}"));
        }
    }
    Ok(failure)
}
