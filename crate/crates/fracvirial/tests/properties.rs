use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fracvirial::cutoff::{self, build_profile, CutoffProfile, RescaledCutoff};
use fracvirial::domain::{self, DomainState, IntervalDomain};
use fracvirial::evolve::{self, EvolveConfig, Stepper};
use fracvirial::fracops::{self, FracParams};
use fracvirial::groundstate::{self, GroundState, Reference};
use fracvirial::virial::{self, VirialEngine};
use fracvirial::{FieldOnGrid, Grid, MQuadrature};

fn field(grid: &Grid, fraction: f64, seed: u64) -> FieldOnGrid {
    FieldOnGrid::band_limited(grid, fraction, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn inner(u: &FieldOnGrid, v: &FieldOnGrid) -> Complex64 {
    u.values.iter().zip(&v.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * u.grid.cell_volume()
}

fn profile() -> &'static CutoffProfile {
    static P: OnceLock<CutoffProfile> = OnceLock::new();
    P.get_or_init(|| build_profile().unwrap())
}

/// Mass-supercritical 1D ground state (s_c = 0.2) shared by the threshold properties.
fn supercritical_q() -> &'static GroundState {
    static Q: OnceLock<GroundState> = OnceLock::new();
    Q.get_or_init(|| {
        let p = FracParams::new(1, 0.6, 2.0).unwrap();
        let g = Grid::new(1, 64.0, 2048).unwrap();
        groundstate::solve_ground_state(&p, &g, 1e-10).unwrap()
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fractional_laplacian_is_self_adjoint(seed in any::<u64>(), s in 0.05f64..0.99, two_d in any::<bool>()) {
        let g = if two_d { Grid::new(2, 8.0, 64).unwrap() } else { Grid::new(1, 8.0, 512).unwrap() };
        let u = field(&g, 0.8, seed);
        let v = field(&g, 0.8, seed ^ 0x9e37_79b9);
        let lhs = inner(&u, &fracops::frac_laplacian(&v, s).unwrap());
        let rhs = inner(&fracops::frac_laplacian(&u, s).unwrap(), &v);
        let scale = u.norm() * fracops::frac_laplacian(&v, s).unwrap().norm();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale);
    }

    #[test]
    fn powers_compose(seed in any::<u64>(), s1 in 0.05f64..0.95, s2 in 0.05f64..0.95) {
        let g = Grid::new(1, 6.0, 256).unwrap();
        let u = field(&g, 0.6, seed);
        let twice = fracops::frac_laplacian(&fracops::frac_laplacian(&u, s1).unwrap(), s2).unwrap();
        let once = fracops::frac_laplacian(&u, s1 + s2).unwrap();
        prop_assert!(twice.sub(&once).norm() <= 1e-12 * once.norm());
    }

    #[test]
    fn global_phase_leaves_virial_reports_unchanged(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
        let p = FracParams::new(2, 0.8, 1.0).unwrap();
        let g = Grid::new(2, 24.0, 64).unwrap();
        let u = evolve::gaussian(&g, 0.8, 2.0).add(&field(&g, 0.3, seed).scaled(Complex64::new(0.05, 0.0)));
        let c = RescaledCutoff::new(profile(), 2.0).unwrap();
        let eng = VirialEngine::new(&g, p, &[c], &MQuadrature::default()).unwrap();
        let a = &eng.evaluate(&u).unwrap()[0];
        let b = &eng.evaluate(&u.scaled(Complex64::from_polar(1.0, theta))).unwrap()[0];
        let scale = a.hessian_term.abs().max(a.nonlinear_term.abs()).max(a.biharmonic_term.abs());
        for (x, y) in [
            (a.m_phi, b.m_phi),
            (a.hessian_term, b.hessian_term),
            (a.biharmonic_term, b.biharmonic_term),
            (a.nonlinear_term, b.nonlinear_term),
            (a.rhs_total, b.rhs_total),
            (a.decomposition.localization_defect, b.decomposition.localization_defect),
        ] {
            prop_assert!((x - y).abs() <= 1e-12 * scale, "{x} vs {y}");
        }
        prop_assert!(a.decomposition.localization_defect >= -1e-12 * scale);
    }

    #[test]
    fn virial_functional_is_additive_in_the_weight(seed in any::<u64>(), r1 in 0.5f64..1.5, r2 in 0.5f64..1.5) {
        let g = Grid::new(2, 16.0, 64).unwrap();
        let u = field(&g, 0.5, seed);
        let f1 = cutoff::eval_on_grid(&RescaledCutoff::new(profile(), r1).unwrap(), &g).unwrap();
        let mut f = cutoff::eval_on_grid(&RescaledCutoff::new(profile(), r2).unwrap(), &g).unwrap();
        let m2 = virial::virial_functional(&u, &f).unwrap();
        for axis in 0..2 {
            for (a, b) in f.grad[axis].iter_mut().zip(&f1.grad[axis]) {
                *a += b;
            }
        }
        let m1 = virial::virial_functional(&u, &f1).unwrap();
        let sum = virial::virial_functional(&u, &f).unwrap();
        prop_assert!((sum - m1 - m2).abs() <= 1e-12 * (m1.abs() + m2.abs()).max(1e-300));
    }

    #[test]
    fn cutoff_scaling_inequalities_and_supports(r in 0.0f64..12.0, radius in prop::sample::select(vec![1.0, 4.0, 16.0])) {
        let base = RescaledCutoff::new(profile(), 1.0).unwrap();
        let c = RescaledCutoff::new(profile(), radius).unwrap();
        let x = r * radius;
        prop_assert!((c.phi(x) - radius * radius * base.phi(r)).abs() <= 1e-14 * (radius * radius * base.phi(r)).abs().max(1.0));
        prop_assert!((c.d(x, 1) - radius * base.d(r, 1)).abs() <= 1e-14 * (radius * base.d(r, 1)).abs().max(1.0));
        prop_assert!(1.0 - c.d(x, 2) >= -1e-12);
        if x > 0.0 {
            prop_assert!(1.0 - c.d(x, 1) / x >= -1e-12);
        }
        for n in [1usize, 2] {
            prop_assert!(n as f64 - c.laplacian(x, n) >= -1e-12);
        }
        if x < radius || x > 10.0 * radius {
            prop_assert!(c.d(x, 3).abs() <= 1e-12 && c.d(x, 4).abs() <= 1e-12);
        }
    }

    #[test]
    fn criterion_verdict_ignores_phase_and_translation(shift in 0usize..2048, theta in 0.0f64..std::f64::consts::TAU, amp in 0.5f64..3.0) {
        let q = supercritical_q();
        let g = q.profile.grid.clone();
        let reference = Reference::from(q);
        let u = evolve::gaussian(&g, amp, 1.0);
        let mut moved = u.values.clone();
        moved.rotate_right(shift);
        let moved = FieldOnGrid::new(&g, moved).unwrap().scaled(Complex64::from_polar(1.0, theta));
        let a = groundstate::check_blowup_criterion(&u, &q.params, &reference).unwrap();
        let b = groundstate::check_blowup_criterion(&moved, &q.params, &reference).unwrap();
        prop_assert_eq!(a.case, b.case);
        prop_assert!(rel(a.energy, b.energy) <= 1e-10 || (a.energy - b.energy).abs() <= 1e-12 * a.grad_norm_sq);
        prop_assert!(rel(a.grad_norm_sq, b.grad_norm_sq) <= 1e-10);
        prop_assert!(rel(a.mass, b.mass) <= 1e-10);
    }

    #[test]
    fn no_sampled_field_beats_the_ground_state_quotient(seed in any::<u64>(), fraction in 0.02f64..0.5) {
        let q = supercritical_q();
        let c = groundstate::gn_constant(q);
        let u = field(&q.profile.grid, fraction, seed);
        let w = groundstate::gn_quotient(&u, &q.params).unwrap();
        prop_assert!(w <= c * (1.0 + 1e-3), "quotient {w} vs C {c}");
    }

    #[test]
    fn forward_then_backward_step_returns_the_field(seed in any::<u64>(), dt in 1e-3f64..0.05, sigma in 0.5f64..2.0) {
        let p = FracParams::new(1, 0.7, sigma).unwrap();
        let g = Grid::new(1, 10.0, 256).unwrap();
        let u = field(&g, 0.5, seed);
        let mut stepper = Stepper::new(&g, p, None, true);
        let mut v = u.values.clone();
        stepper.step(&mut v, dt);
        stepper.step(&mut v, -dt);
        let back = FieldOnGrid::new(&g, v).unwrap();
        prop_assert!(back.sub(&u).norm() <= 1e-12 * u.norm());
    }

    #[test]
    fn quadratic_form_is_positive(seed in any::<u64>(), s in 0.55f64..0.95) {
        let d = IntervalDomain::new(-1.0, 1.0, 63).unwrap();
        let op = domain::assemble(&d, s).unwrap();
        prop_assert!(op.eigenvalues[0] > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<Complex64> = (0..63)
            .map(|_| Complex64::new(rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0)))
            .collect();
        let u = DomainState { values };
        let form = u.form(&op);
        prop_assert!(form >= op.eigenvalues[0] * u.mass(&op) * (1.0 - 1e-12));
    }

    #[test]
    fn pohozaev_slack_is_bounded_below_on_random_states(seed in any::<u64>(), s in 0.55f64..0.95) {
        let d = IntervalDomain::new(-1.0, 1.0, 255).unwrap();
        let op = domain::assemble(&d, s).unwrap();
        for u in domain::random_bump_states(&d, 5, seed) {
            let chk = domain::pohozaev_estimate_check(&u, &op);
            prop_assert!(chk.passed, "slack {} tol {}", chk.slack, chk.tol_disc);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn multiplier_matches_resolvent_integral(seed in any::<u64>(), s in prop::sample::select(vec![0.55, 0.6, 0.75, 0.9])) {
        let g = Grid::new(1, 16.0, 1024).unwrap();
        let u = field(&g, 0.5, seed);
        let q = MQuadrature::default();
        let m = fracops::frac_laplacian(&u, s).unwrap();
        let b = fracops::balakrishnan_apply(&u, s, &q).unwrap();
        prop_assert!(m.sub(&b).norm() <= 1e-6 * m.norm());
        let wgi = fracops::weighted_gradient_integral(&u, s, &q).unwrap();
        let semi = fracops::frac_seminorm(&u, s).unwrap();
        prop_assert!((wgi - s * semi * semi).abs() <= 1e-6 * s * semi * semi);
    }

    #[test]
    fn smooth_runs_conserve_energy_and_mass(factor in 0.2f64..0.6, width in 1.2f64..2.0) {
        let p = FracParams::new(2, 0.8, 1.0).unwrap();
        let g = Grid::new(2, 24.0, 128).unwrap();
        let a0 = evolve::zero_energy_amplitude(&g, width, &p).unwrap();
        let u0 = evolve::gaussian(&g, factor * a0, width);
        let log = evolve::run(&u0, &EvolveConfig { dt: 1e-3, t_max: 0.5, ..Default::default() }, &p).unwrap();
        prop_assert!(log.blowup.is_none());
        prop_assert!(log.energy_drift_rate() <= 1e-8, "energy drift {}", log.energy_drift_rate());
        prop_assert!(log.mass_drift_rate() <= 1e-8, "mass drift {}", log.mass_drift_rate());
    }
}

#[test]
fn petviashvili_stabilizer_settles_at_one() {
    let q = supercritical_q();
    assert!((q.gamma - 1.0).abs() < 1e-10, "gamma {}", q.gamma);
    assert!(q.residual < 1e-9);
}

#[test]
fn pohozaev_residuals_shrink_at_second_order_or_better_as_the_box_grows() {
    // Fixed h = 0.125; the box truncation of the algebraic tail is the leading error.
    let p = FracParams::new(1, 0.8, 1.0).unwrap();
    let res: Vec<f64> = [(16.0, 256), (32.0, 512), (64.0, 1024)]
        .iter()
        .map(|&(l, m)| {
            let q = groundstate::solve_ground_state(&p, &Grid::new(1, l, m).unwrap(), 1e-10).unwrap();
            let (r1, r2) = groundstate::pohozaev_relative(&q);
            assert!(r1 < 1e-10);
            r2
        })
        .collect();
    for w in res.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 2.0, "residuals {res:?}");
    }
}

#[test]
fn first_dirichlet_eigenvalue_converges_at_first_order() {
    for s in [0.6, 0.8] {
        let r = domain::refine_first_eigenvalue(-1.0, 1.0, s, &[127, 255, 511, 1023]).unwrap();
        let l = &r.lambda1;
        let coarse = ((l[1] - l[0]) / (l[2] - l[1])).log2();
        // The order tends to 1 from below; the deficit halves with each refinement.
        assert!(r.observed_order >= 0.99 && r.observed_order > coarse, "s {s}: {coarse} {r:?}");
        assert!(l.windows(3).all(|w| (w[2] - w[1]).abs() < (w[1] - w[0]).abs()));
    }
}

#[test]
fn half_laplacian_first_eigenvalue_extrapolates_to_reference() {
    // First Dirichlet eigenvalue of the half Laplacian on (-1, 1).
    let reference = 1.157_773_883_697_7;
    let r = domain::refine_first_eigenvalue(-1.0, 1.0, 0.5, &[511, 1023, 2047]).unwrap();
    assert!((r.extrapolated - reference).abs() < 1e-6, "{r:?}");
}
