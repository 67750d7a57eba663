mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsde_chain::bsde::{
    comparison_check, lipschitz_spot_check, pathwise_residual, solve_bsde, AffineInStateDriver, DiscountDriver,
    FnDriver, MarkovDriver, Scheme, SolveOptions, ZeroDriver,
};
use rbsde_chain::chain::{simulate_path, ChainPath};
use rbsde_chain::mc::mc_estimate;
use rbsde_chain::DVector;

fn rk4(steps: usize) -> SolveOptions {
    SolveOptions::new(steps, Scheme::ExplicitRk4)
}

#[test]
fn discount_residual_on_random_paths() {
    let spec = sym2(1.0, 1.0);
    let driver = DiscountDriver { rate: 0.05 };
    let xi = DVector::from_element(2, 1.0);
    let sol = solve_bsde(&spec, &driver, &xi, rk4(1000)).unwrap();
    for (k, t) in sol.y.grid.times().enumerate() {
        let exact = (-0.05 * (1.0 - t)).exp();
        assert!((sol.y.at(k, 0) - exact).abs() < 1e-8 && (sol.y.at(k, 1) - exact).abs() < 1e-8);
    }
    let worst = (0..100).map(|s| pathwise_residual(&sol, &simulate_path(&spec, s), &spec, &driver, &xi)).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn constant_solution_residual_vanishes() {
    let spec = sym2(2.0, 1.5);
    let xi = DVector::from_element(2, 3.0);
    let sol = solve_bsde(&spec, &ZeroDriver, &xi, rk4(100)).unwrap();
    for s in 0..20 {
        assert!(pathwise_residual(&sol, &simulate_path(&spec, s), &spec, &ZeroDriver, &xi) < 1e-12);
    }
}

#[test]
fn residual_shrinks_under_step_doubling() {
    let spec = sym2(1.0, 1.0);
    let driver = AffineInStateDriver { slope: DVector::from_vec(vec![-0.5, 0.2]), offset: DVector::from_vec(vec![1.0, -1.0]) };
    let xi = DVector::from_vec(vec![1.0, 0.0]);
    let path = ChainPath { jump_times: vec![0.3, 0.55], states: vec![0, 1, 0], horizon: 1.0, seed: 0 };
    for scheme in [Scheme::ImplicitEuler, Scheme::ExplicitRk4] {
        let r = |steps| {
            let sol = solve_bsde(&spec, &driver, &xi, SolveOptions::new(steps, scheme)).unwrap();
            pathwise_residual(&sol, &path, &spec, &driver, &xi)
        };
        let (coarse, fine) = (r(50), r(100));
        let ratio = coarse / fine;
        match scheme {
            Scheme::ImplicitEuler => assert!((1.6..2.6).contains(&ratio), "euler ratio {ratio}"),
            Scheme::ExplicitRk4 => assert!(ratio > 8.0, "rk4 ratio {ratio} ({coarse:e} -> {fine:e})"),
        }
    }
}

#[test]
fn occupancy_matches_monte_carlo() {
    let spec = sym2(1.0, 1.0);
    let sol = solve_bsde(&spec, &ZeroDriver, &DVector::from_vec(vec![1.0, 0.0]), rk4(1000)).unwrap();
    let est = mc_estimate(&spec, |p| f64::from(u8::from(p.final_state() == 0)), 100_000, 21).unwrap();
    assert!(est.agrees_with(sol.initial_value(0)), "{} vs {est:?}", sol.initial_value(0));
}

#[test]
fn linear_in_the_terminal_condition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let spec = random_chain(&mut rng, n, 3.0, 1.0);
        let (x1, x2) = (random_vector(&mut rng, n, -2.0, 2.0), random_vector(&mut rng, n, -2.0, 2.0));
        let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let y1 = solve_bsde(&spec, &ZeroDriver, &x1, rk4(200)).unwrap().y;
        let y2 = solve_bsde(&spec, &ZeroDriver, &x2, rk4(200)).unwrap().y;
        let y = solve_bsde(&spec, &ZeroDriver, &(&x1 * a + &x2 * b), rk4(200)).unwrap().y;
        for k in 0..y.values.len() {
            assert!((&y.values[k] - (&y1.values[k] * a + &y2.values[k] * b)).amax() < 1e-10);
        }
    }
}

#[test]
fn schemes_agree_to_first_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let n = rng.gen_range(2..=4);
        let spec = random_chain(&mut rng, n, 2.0, 1.0);
        let driver = AffineInStateDriver { slope: random_vector(&mut rng, n, -1.0, 1.0), offset: random_vector(&mut rng, n, -1.0, 1.0) };
        let xi = random_vector(&mut rng, n, -1.0, 1.0);
        let steps = 400;
        let a = solve_bsde(&spec, &driver, &xi, SolveOptions::new(steps, Scheme::ExplicitRk4)).unwrap();
        let b = solve_bsde(&spec, &driver, &xi, SolveOptions::new(steps, Scheme::ImplicitEuler)).unwrap();
        let lipschitz = driver.lipschitz_y() + rbsde_chain::chain::rate_bound_m(&spec);
        assert!(a.y.sup_distance(&b.y) < 10.0 / steps as f64 * lipschitz);
    }
}

#[test]
fn comparison_examples() {
    let spec = sym2(1.0, 1.0);
    let r = comparison_check(&spec, &ZeroDriver, &DVector::zeros(2), &ZeroDriver, &DVector::from_element(2, 1.0), 100).unwrap();
    assert!(r.holds);

    let f1 = FnDriver::new(1.0, 0.0, |_, _, y: f64, _: &DVector<f64>| -y);
    let f2 = FnDriver::new(1.0, 0.0, |_, _, y: f64, _: &DVector<f64>| -y + 0.1);
    let one = DVector::from_element(2, 1.0);
    assert!(comparison_check(&spec, &f1, &one, &f2, &one, 200).unwrap().holds);

    let lo = DVector::from_vec(vec![0.0, 1.0]);
    let r = comparison_check(&spec, &ZeroDriver, &lo, &ZeroDriver, &one, 200).unwrap();
    assert!(r.holds);
    let a = solve_bsde(&spec, &ZeroDriver, &lo, rk4(200)).unwrap();
    assert!(a.initial_value(0) < 1.0 - 0.1);
}

#[test]
fn comparison_rejects_unordered_drivers() {
    let spec = sym2(1.0, 1.0);
    let hi = FnDriver::new(0.0, 0.0, |_, _, _, _: &DVector<f64>| 1.0);
    let one = DVector::from_element(2, 1.0);
    assert!(comparison_check(&spec, &hi, &one, &ZeroDriver, &one, 50).is_err());
}

#[test]
fn declared_constants_survive_spot_checks() {
    let spec = sym2(1.0, 1.0);
    let coupled = FnDriver::new(0.0, 0.3, |_, i: usize, _, z: &DVector<f64>| 0.3 * (z[1 - i] - z[i]).sin());
    assert!(lipschitz_spot_check(&spec, &coupled, 2000, 1) <= 1e-12);
    let understated = FnDriver::new(0.0, 0.1, |_, i: usize, _, z: &DVector<f64>| 0.3 * (z[1 - i] - z[i]));
    assert!(lipschitz_spot_check(&spec, &understated, 2000, 1) > 0.0);
}
