//! Per-iteration cost scaling. Each measurement is the minimum over several
//! repeats, which filters scheduler noise on shared machines.

use std::sync::Mutex;
use std::time::Instant;

use mmv_core::amp::{self, AmpConfig, AmpState};
use mmv_core::group_lasso::{self, AdmmConfig, AdmmState};
use mmv_core::map::{coordinate_step, MapConfig, MapState};
use mmv_core::model::{draw_signal, gaussian_pilots, measure, seeded_rng};
use mmv_core::ComplexMatrix;
use rand::Rng;

const REPEATS: usize = 15;

// Timing tests must not share the CPU with each other.
static SERIAL: Mutex<()> = Mutex::new(());

fn instance(l: usize, n: usize, m: usize, seed: u64) -> (ComplexMatrix, ComplexMatrix) {
    let mut rng = seeded_rng(seed);
    let a = gaussian_pilots(l, n, true, &mut rng);
    let alpha: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.1).collect();
    let x = draw_signal(&alpha, m, &mut rng);
    let (y, _) = measure(&a, &x, 0.1, &mut rng).unwrap();
    (a, y)
}

fn time_once(f: &mut impl FnMut()) -> f64 {
    let t = Instant::now();
    f();
    t.elapsed().as_secs_f64()
}

/// Minimum times of `base` and `other`, measured alternately so that a noisy
/// stretch affects both.
fn min_time_pair(mut base: impl FnMut(), mut other: impl FnMut()) -> (f64, f64) {
    base();
    other();
    (0..REPEATS).fold((f64::INFINITY, f64::INFINITY), |(b, o), _| {
        (b.min(time_once(&mut base)), o.min(time_once(&mut other)))
    })
}

fn admm_run(l: usize, n: usize, m: usize) -> impl FnMut() {
    let (a, y) = instance(l, n, m, 1);
    let a_adj = a.adjoint();
    let cfg = AdmmConfig::with_lambda(0.1);
    move || {
        let mut state = AdmmState::new(&a, m).unwrap();
        for _ in 0..30 {
            group_lasso::step(&mut state, &a, &a_adj, &y, &cfg).unwrap();
        }
    }
}

fn amp_run(l: usize, n: usize, m: usize) -> impl FnMut() {
    let (a, y) = instance(l, n, m, 2);
    let s = 1.0 / (l as f64).sqrt();
    let (a, y) = (a.scaled(s), y.scaled(s));
    let a_adj = a.adjoint();
    let cfg = AmpConfig::uniform(n, 0.1);
    move || {
        let mut state = AmpState::new(&y, n, cfg.tau_floor);
        for _ in 0..30 {
            amp::step(&mut state, &y, &a, &a_adj, &cfg).unwrap();
        }
    }
}

fn map_sweep_run(l: usize, n: usize, m: usize) -> impl FnMut() {
    let (a, y) = instance(l, n, m, 3);
    let a_dense = a.to_nalgebra();
    let cfg = MapConfig::ml(n, 0.1);
    move || {
        let mut state = MapState::new(&y, n, 0.1);
        for _ in 0..6 {
            for dev in 0..n {
                coordinate_step(&mut state, dev, &a_dense, m, &cfg);
            }
        }
    }
}

fn assert_ratio<F: FnMut()>(
    name: &str,
    run: impl Fn(usize, usize, usize) -> F,
    dims: (usize, usize, usize),
    doubled: (usize, usize, usize),
    bound: f64,
) {
    let (base, other) = min_time_pair(
        run(dims.0, dims.1, dims.2),
        run(doubled.0, doubled.1, doubled.2),
    );
    let ratio = other / base;
    assert!(
        ratio <= bound,
        "{name}: doubling gave {ratio:.2}x (bound {bound}x)"
    );
}

#[test]
fn admm_iteration_cost_is_linear_in_each_dimension() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (l, n, m) = (32, 256, 8);
    assert_ratio("admm L", admm_run, (l, n, m), (2 * l, n, m), 2.5);
    assert_ratio("admm N", admm_run, (l, n, m), (l, 2 * n, m), 2.5);
    assert_ratio("admm M", admm_run, (l, n, m), (l, n, 2 * m), 2.5);
}

#[test]
fn amp_iteration_cost_is_linear_in_each_dimension() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    // The Jacobian correction adds N M² work, dominated by L N M while M < L.
    let (l, n, m) = (48, 256, 4);
    assert_ratio("amp L", amp_run, (l, n, m), (2 * l, n, m), 2.5);
    assert_ratio("amp N", amp_run, (l, n, m), (l, 2 * n, m), 2.5);
    assert_ratio("amp M", amp_run, (l, n, m), (l, n, 2 * m), 2.5);
}

#[test]
fn map_sweep_cost_is_linear_in_n_and_quadratic_in_l() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (l, n, m) = (24, 256, 8);
    assert_ratio("map N", map_sweep_run, (l, n, m), (l, 2 * n, m), 2.5);
    assert_ratio("map L", map_sweep_run, (l, n, m), (2 * l, n, m), 5.0);
    // The sample covariance is formed once, so a sweep does not depend on M.
    assert_ratio("map M", map_sweep_run, (l, n, m), (l, n, 2 * m), 1.5);
}
