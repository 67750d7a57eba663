mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsde_chain::chain::{simulate_path, ChainPath, ChainSpec};
use rbsde_chain::market::{
    sdf_dynamics_residual, sdf_path, short_rate, short_rate_checked, sigma_matrix, stationary_stock_prices,
    stock_curves, stock_sde_residual, MarketSpec,
};
use rbsde_chain::mc::deflated_gains_check;
use rbsde_chain::{DMatrix, DVector, Error};

#[test]
fn short_rate_matches_explicit_bilinear_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..50 {
        let n = rng.gen_range(2..=4);
        let m = random_market(&mut rng, n, true);
        let a = m.chain().generator_at(0.0);
        let c = m.c_at(0.0);
        for i in 0..n {
            let mut bilinear = 0.0;
            for j in 0..n {
                bilinear += ((c[(i, i)] - c[(i, j)]).exp() - 1.0) * a[(j, i)];
            }
            assert!((short_rate(&m, 0.3, i) - (m.d_at(0.0)[i] - bilinear)).abs() < 1e-14);
            assert!(short_rate_checked(&m, 0.3, i).is_ok());
        }
    }
}

#[test]
fn sigma_diagonal_vanishes_and_entries_exceed_minus_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let c = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-3.0..3.0));
        let s = sigma_matrix(&c);
        assert!((0..4).all(|i| s[(i, i)] == 0.0));
        assert!(s.iter().all(|&x| x > -1.0));
    }
}

#[test]
fn single_jump_picks_up_the_exact_factor() {
    let m = sdf_market();
    let path = ChainPath { jump_times: vec![0.35], states: vec![0, 1], horizon: 1.0, seed: 0 };
    let pi = sdf_path(&m, &path, 20).unwrap();
    let (c, d) = (m.c_at(0.0), m.d_at(0.0));
    // nodes 0.3 and 0.4 straddle the jump
    let expected = (c[(0, 0)] - c[(0, 1)]).exp() * (-d[0] * 0.05 - d[1] * 0.05).exp();
    assert!((pi[8] / pi[6] - expected).abs() < 1e-14);
    assert!(pi.iter().all(|&p| p > 0.0));
    let closed = (c[(0, 0)] - c[(0, 1)] - d[0] * 0.35 - d[1] * 0.65).exp();
    assert!((pi[20] - closed).abs() < 1e-14);
}

#[test]
fn sdf_residual_is_first_order_with_jumps() {
    let m = sdf_market();
    let path = ChainPath { jump_times: vec![0.35], states: vec![0, 1], horizon: 1.0, seed: 0 };
    let fine = sdf_dynamics_residual(&m, &path, 10_000).unwrap();
    let coarse = sdf_dynamics_residual(&m, &path, 5_000).unwrap();
    assert!(fine < 1e-8, "{fine:e}");
    assert!((1.7..2.3).contains(&(coarse / fine)), "{coarse:e} / {fine:e}");
}

#[test]
fn time_homogeneous_stock_residual_is_exact() {
    let m = sdf_market();
    let curves = stock_curves(&m, 10_000, 10.0).unwrap();
    for seed in 0..10 {
        let r = stock_sde_residual(&m, &curves, &simulate_path(m.chain(), seed));
        assert!(r < 1e-8, "{r:e}");
    }
}

#[test]
fn moving_stock_curves_converge_at_first_order() {
    let m = two_regime_market();
    let path = simulate_path(m.chain(), 4);
    let r = |steps| stock_sde_residual(&m, &stock_curves(&m, steps, 10.0).unwrap(), &path);
    let ratio = r(2_000) / r(4_000);
    assert!((1.7..2.3).contains(&ratio), "{ratio}");
}

#[test]
fn stationary_prices_scale_with_dividends() {
    let m = c0_market();
    let gamma = &m.regime_at(0.0).gamma;
    let delta = DVector::from_vec(vec![0.7, 1.3]);
    let s = stationary_stock_prices(gamma, &delta).unwrap();
    let s3 = stationary_stock_prices(gamma, &(&delta * 3.0)).unwrap();
    assert!((&s3 - &s * 3.0).amax() < 1e-12);
    assert!((gamma.transpose() * &s + &delta).amax() < 1e-12);
}

#[test]
fn stock_curves_are_bounded_and_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for k in 0..10 {
        let m = random_market(&mut rng, 3, k % 2 == 0);
        let curves = stock_curves(&m, 200, 10.0).unwrap();
        assert!(curves.lower_bound > 0.0);
        for s in &curves.s {
            for v in &s.values {
                assert!(v.iter().all(|&p| p >= curves.lower_bound && p <= curves.upper_bound));
            }
        }
        assert!(curves.min_phi_singular_value.unwrap() > 1e-10);
    }
}

#[test]
fn zero_discount_makes_gamma_unstable() {
    let m = MarketSpec::constant(sym2(1.0, 1.0), DMatrix::zeros(2, 2), DVector::zeros(2), vec![DVector::from_element(2, 1.0)])
        .unwrap();
    assert!(matches!(stock_curves(&m, 10, 1.0), Err(Error::UnstableGamma { .. })));
}

#[test]
fn rate_above_cap_is_rejected() {
    let r = MarketSpec::new(
        sym2(1.0, 1.0),
        vec![(0.0, DMatrix::zeros(2, 2))],
        vec![(0.0, DVector::from_element(2, 0.2))],
        vec![DVector::from_element(2, 1.0)],
        0.1,
    );
    assert!(matches!(r, Err(Error::RateBoundViolated { .. })));
}

#[test]
fn single_state_rate_is_the_drift() {
    let chain = ChainSpec::constant(DMatrix::zeros(1, 1), 0, 2.0).unwrap();
    let m = MarketSpec::constant(chain, DMatrix::from_element(1, 1, 0.7), DVector::from_element(1, 0.03), vec![
        DVector::from_element(1, 1.0),
    ])
    .unwrap();
    assert_eq!(short_rate(&m, 1.2, 0), 0.03);
    let curves = stock_curves(&m, 100, 20.0).unwrap();
    assert!(stock_sde_residual(&m, &curves, &ChainPath::constant(0, 2.0)) < 1e-10);
}

#[test]
fn deflated_gains_are_martingales() {
    for m in [c0_market(), sdf_market()] {
        let curves = stock_curves(&m, 1000, 10.0).unwrap();
        for stock in 0..m.n_stocks() {
            let row = deflated_gains_check(&m, &curves, stock, 100_000, 60 + stock as u64).unwrap();
            assert!(row.pass, "{row:?}");
        }
    }
}
