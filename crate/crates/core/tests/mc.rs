mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsde_chain::chain::ChainSpec;
use rbsde_chain::mc::{european_consistency, isometry_check, mc_estimate};
use rbsde_chain::market::MarketSpec;
use rbsde_chain::{DMatrix, DVector, Error};

#[test]
fn constant_functional_is_exact() {
    let est = mc_estimate(&sym2(1.0, 1.0), |_| 1.0, 5000, 0).unwrap();
    assert_eq!((est.mean, est.std_error), (1.0, 0.0));
}

#[test]
fn same_seed_same_bits() {
    let spec = sym2(1.3, 2.0);
    let f = |p: &rbsde_chain::chain::ChainPath| p.jump_times.iter().sum::<f64>();
    let a = mc_estimate(&spec, f, 20_000, 99).unwrap();
    let b = mc_estimate(&spec, f, 20_000, 99).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    assert_ne!(a.mean, mc_estimate(&spec, f, 20_000, 100_000).unwrap().mean);
}

#[test]
fn standard_error_halves_with_four_times_the_paths() {
    let spec = sym2(1.0, 1.0);
    let f = |p: &rbsde_chain::chain::ChainPath| p.n_jumps() as f64;
    let small = mc_estimate(&spec, f, 10_000, 1).unwrap();
    let large = mc_estimate(&spec, f, 40_000, 1).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn isometry_vanishes_on_constant_integrands() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..5 {
        let n = rng.gen_range(2..=4);
        let spec = random_chain(&mut rng, n, 3.0, 1.0);
        let r = isometry_check(&spec, &DVector::from_element(n, -2.5), 500, 3).unwrap();
        assert!(r.lhs.mean.abs() < 1e-20 && r.rhs.mean.abs() < 1e-14 && r.passes, "{r:?}");
    }
}

#[test]
fn doubling_the_rate_doubles_both_sides() {
    let z = DVector::from_vec(vec![1.0, 0.0]);
    let slow = isometry_check(&sym2(1.0, 1.0), &z, 100_000, 5).unwrap();
    let fast = isometry_check(&sym2(2.0, 1.0), &z, 100_000, 5).unwrap();
    // Z'ΨZ equals the rate in either state
    assert!(slow.rhs.mean == 1.0 && fast.rhs.mean == 2.0);
    assert!(slow.lhs.agrees_with(1.0) && fast.lhs.agrees_with(2.0), "{slow:?} {fast:?}");
    assert!(slow.passes && fast.passes);
}

#[test]
fn isometry_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut failures = 0;
    for k in 0..50 {
        let n = rng.gen_range(2..=4);
        let spec = random_chain(&mut rng, n, 2.0, 1.0);
        let z = random_vector(&mut rng, n, -1.0, 1.0);
        if !isometry_check(&spec, &z, 20_000, (k + 1) << 32).unwrap().passes {
            failures += 1;
        }
    }
    // 3σ misses about one run in 370
    assert!(failures <= 2, "{failures} of 50");
}

#[test]
fn dimension_mismatch_is_reported() {
    let r = isometry_check(&sym2(1.0, 1.0), &DVector::zeros(3), 10, 0);
    assert!(matches!(r, Err(Error::DimensionMismatch(_))));
}

#[test]
fn single_state_european_is_exact() {
    let chain = ChainSpec::constant(DMatrix::zeros(1, 1), 0, 1.0).unwrap();
    let m = MarketSpec::constant(chain, DMatrix::zeros(1, 1), DVector::from_element(1, 0.05), vec![
        DVector::from_element(1, 1.0),
    ])
    .unwrap();
    let row = european_consistency(&m, &DVector::from_element(1, 2.0), 100, 1000, 0).unwrap();
    assert!(row.std_error < 1e-15);
    assert!((row.rhs - 2.0 * (-0.05f64).exp()).abs() < 1e-14, "{row:?}");
    assert!((row.lhs - row.rhs).abs() < 1e-4);
}

#[test]
fn zero_claim_is_worth_nothing() {
    let row = european_consistency(&sdf_market(), &DVector::zeros(2), 1000, 100, 0).unwrap();
    assert_eq!((row.lhs, row.rhs, row.std_error), (0.0, 0.0, 0.0));
    assert!(row.pass);
}

#[test]
fn european_values_agree_on_both_markets() {
    for (m, seed) in [(c0_market(), 80), (sdf_market(), 81)] {
        let row = european_consistency(&m, &DVector::from_vec(vec![1.0, 0.5]), 100_000, 1000, seed).unwrap();
        assert!(row.pass, "{row:?}");
    }
}

#[test]
fn non_finite_sample_carries_its_seed() {
    let err = mc_estimate(&sym2(1.0, 1.0), |p| if p.seed == 1_000_007 { f64::INFINITY } else { 1.0 }, 100, 1_000_000)
        .unwrap_err();
    assert!(matches!(err, Error::NonFiniteSample { seed: 1_000_007 }));
}
