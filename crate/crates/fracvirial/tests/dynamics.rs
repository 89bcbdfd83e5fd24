use fracvirial::evolve::{self, EvolveConfig};
use fracvirial::fracops::FracParams;
use fracvirial::grid::Grid;
use fracvirial::groundstate;

#[test]
fn ground_state_data_keeps_its_gradient_norm() {
    let p = FracParams::new(1, 0.8, 1.0).unwrap();
    let g = Grid::new(1, 64.0, 1024).unwrap();
    let q = groundstate::solve_ground_state(&p, &g, 1e-11).unwrap();
    let spread_at = |dt: f64| {
        let cfg = EvolveConfig { dt, t_max: 1.0, snapshot_stride: 50, ..Default::default() };
        let log = evolve::run(&q.profile, &cfg, &p).unwrap();
        assert!(log.blowup.is_none());
        let g0 = log.grad_norm[0];
        let spread = log.grad_norm.iter().map(|v| (v / g0 - 1.0).abs()).fold(0.0, f64::max);
        // The standing wave only rotates its phase: |u(T)| = Q.
        let last = log.final_state.unwrap();
        let gap = last.values.iter().zip(&q.profile.values).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
        (spread, gap / q.profile.max_abs())
    };
    let coarse = spread_at(1e-3);
    let fine = spread_at(5e-4);
    // What remains is the splitting error, second order in dt.
    assert!(fine.0 < 1e-6 && coarse.0 / fine.0 > 3.5, "{coarse:?} {fine:?}");
    assert!(fine.1 < 1e-6, "{fine:?}");
}

#[test]
fn larger_negative_energy_data_blows_up_sooner() {
    let p = FracParams::new(2, 0.8, 1.0).unwrap();
    let g = Grid::new(2, 32.0, 256).unwrap();
    let width = 1.5;
    let a0 = evolve::zero_energy_amplitude(&g, width, &p).unwrap();
    let cfg = EvolveConfig { dt: 2e-3, t_max: 10.0, snapshot_stride: 10, conservation_tol: 1e-2, leak_tol: 1e-4, ..Default::default() };
    let times: Vec<f64> = [1.5, 2.0, 3.0]
        .iter()
        .map(|f| {
            let log = evolve::run(&evolve::gaussian(&g, f * a0, width), &cfg, &p).unwrap();
            assert!(log.energy[0] < 0.0);
            log.blowup.expect("no blowup flag").time
        })
        .collect();
    assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
}
