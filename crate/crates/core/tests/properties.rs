use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rbsde_chain::bsde::{solve_bsde, AffineInStateDriver, Scheme, SolveOptions, ZeroDriver};
use rbsde_chain::chain::{psi_from_generator, rate_bound_m, simulate_path, ChainSpec};
use rbsde_chain::linalg::{penrose_residual_relative, pseudoinverse, DEFAULT_PINV_TOL};
use rbsde_chain::rbsde::{solve_reflected, Obstacle};
use rbsde_chain::{DMatrix, DVector, Error, TimeGrid};

/// Column-convention generator from `n(n−1)` off-diagonal rates.
fn generator_from(n: usize, rates: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut it = rates.iter();
    for j in 0..n {
        for i in 0..n {
            if i != j {
                a[(i, j)] = *it.next().unwrap();
            }
        }
        a[(j, j)] = -a.column(j).sum();
    }
    a
}

fn generator() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=5).prop_flat_map(|n| prop::collection::vec(0.0..3.0f64, n * (n - 1)).prop_map(move |r| generator_from(n, &r)))
}

fn chain_with_vectors() -> impl Strategy<Value = (ChainSpec, DVector<f64>, DVector<f64>)> {
    generator().prop_flat_map(|a| {
        let n = a.nrows();
        (
            Just(a),
            0..n,
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n),
        )
            .prop_map(|(a, init, x, y)| {
                (ChainSpec::constant(a, init, 1.0).unwrap(), DVector::from_vec(x), DVector::from_vec(y))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn psi_is_symmetric_psd_with_zero_sums(a in generator(), pick in 0usize..5) {
        let n = a.nrows();
        let psi = psi_from_generator(&a, pick % n);
        prop_assert!((&psi - psi.transpose()).amax() < 1e-12);
        prop_assert!((&psi * DVector::from_element(n, 1.0)).amax() < 1e-12);
        let eig = SymmetricEigen::new(psi).eigenvalues;
        prop_assert!(eig.min() > -1e-10);
    }

    #[test]
    fn constants_are_null_directions(a in generator(), pick in 0usize..5, c in -10.0..10.0f64) {
        let n = a.nrows();
        let psi = psi_from_generator(&a, pick % n);
        let v = DVector::from_element(n, c);
        prop_assert!(v.dot(&(&psi * &v)).abs() < 1e-10);
    }

    #[test]
    fn seminorm_is_bounded_by_the_rate((spec, c, _) in chain_with_vectors(), pick in 0usize..5) {
        let n = spec.n_states();
        let psi = psi_from_generator(spec.generator_at(0.0), pick % n);
        let m = rate_bound_m(&spec);
        prop_assert!(c.dot(&(&psi * &c)) <= 3.0 * m * c.norm_squared() + 1e-12);
    }

    #[test]
    fn pinv_of_gram_matrices(n in 1usize..=8, k in 1usize..=8, entries in prop::collection::vec(-1.0..1.0f64, 64)) {
        let b = DMatrix::from_fn(n, k, |i, j| entries[i * 8 + j]);
        let q = &b * b.transpose();
        let dag = pseudoinverse(&q, DEFAULT_PINV_TOL);
        let eig = SymmetricEigen::new(q.clone()).eigenvalues;
        let top = eig.amax();
        prop_assume!(top > 0.0);
        let kept = eig.iter().filter(|l| l.abs() > DEFAULT_PINV_TOL * top).fold(f64::INFINITY, |m, l| m.min(l.abs()));
        let kappa = top / kept;
        let r = penrose_residual_relative(&q, &dag);
        prop_assert!(r <= 1e3 * f64::EPSILON * kappa.max(1.0), "residual {r:e} at condition {kappa:e}");
    }

    #[test]
    fn generators_accepted_and_corrupted_ones_rejected(a in generator(), bump in 0.01..1.0f64) {
        let n = a.nrows();
        prop_assert!(ChainSpec::constant(a.clone(), 0, 1.0).is_ok());
        if n > 1 {
            let mut bad = a;
            bad[(1, 0)] = -bump;
            let rejected = matches!(ChainSpec::constant(bad, 0, 1.0), Err(Error::NonGenerator { .. }));
            prop_assert!(rejected);
        }
    }

    #[test]
    fn simulated_paths_are_well_formed(a in generator(), seed in any::<u64>()) {
        let spec = ChainSpec::constant(a, 0, 2.0).unwrap();
        let p = simulate_path(&spec, seed);
        prop_assert_eq!(p.states.len(), p.jump_times.len() + 1);
        prop_assert!(p.states.windows(2).all(|w| w[0] != w[1]));
        prop_assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(p.jump_times.iter().all(|&t| t > 0.0 && t <= 2.0));
    }

    #[test]
    fn linear_drivers_give_linear_solutions((spec, x, y) in chain_with_vectors(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let n = spec.n_states();
        let driver = AffineInStateDriver { slope: DVector::from_fn(n, |i, _| 0.1 * i as f64 - 0.2), offset: DVector::zeros(n) };
        let opts = SolveOptions::new(100, Scheme::ExplicitRk4);
        let a = solve_bsde(&spec, &driver, &x, opts).unwrap().y;
        let b = solve_bsde(&spec, &driver, &y, opts).unwrap().y;
        let ab = solve_bsde(&spec, &driver, &(&x * s + &y * t), opts).unwrap().y;
        for k in 0..ab.values.len() {
            prop_assert!((&ab.values[k] - (&a.values[k] * s + &b.values[k] * t)).amax() < 1e-10);
        }
    }

    #[test]
    fn schemes_agree((spec, x, _) in chain_with_vectors()) {
        let steps = 400;
        let a = solve_bsde(&spec, &ZeroDriver, &x, SolveOptions::new(steps, Scheme::ExplicitRk4)).unwrap().y;
        let b = solve_bsde(&spec, &ZeroDriver, &x, SolveOptions::new(steps, Scheme::ImplicitEuler)).unwrap().y;
        let m = rate_bound_m(&spec);
        prop_assert!(a.sup_distance(&b) <= 2.0 * m * x.amax() / steps as f64 + 1e-12);
    }

    #[test]
    fn reflected_solution_stays_above_the_obstacle(
        (spec, base, slope) in chain_with_vectors(),
    ) {
        let n = spec.n_states();
        let steps = 200;
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let g = Obstacle::from_fn(grid, n, |t, i| base[i] + slope[i] * t).unwrap();
        let xi = g.g.terminal().clone();
        let sol = solve_reflected(&spec, &ZeroDriver, &xi, &g, steps).unwrap();
        prop_assert!(sol.min_margin(&g) >= 0.0);
        prop_assert!(sol.k_is_valid());
    }
}
