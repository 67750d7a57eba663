#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rbsde_chain::chain::ChainSpec;
use rbsde_chain::market::MarketSpec;
use rbsde_chain::{DMatrix, DVector};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn sym2(rate: f64, horizon: f64) -> ChainSpec {
    ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-rate, rate, rate, -rate]), 0, horizon).unwrap()
}

/// Column-convention generator with off-diagonal rates in `[0, max_rate)`.
pub fn random_generator(rng: &mut ChaCha8Rng, n: usize, max_rate: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i != j {
                a[(i, j)] = rng.gen_range(0.0..max_rate);
            }
        }
        let col: f64 = (0..n).filter(|&i| i != j).map(|i| a[(i, j)]).sum();
        a[(j, j)] = -col;
    }
    a
}

/// Chain with one to three generator pieces on `[0, horizon]`.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize, max_rate: f64, horizon: f64) -> ChainSpec {
    let pieces = rng.gen_range(1..=3);
    let mut starts = vec![0.0];
    for k in 1..pieces {
        starts.push(horizon * k as f64 / pieces as f64);
    }
    let schedule = starts.into_iter().map(|s| (s, random_generator(rng, n, max_rate))).collect();
    let init = rng.gen_range(0..n);
    rbsde_chain::chain::build_chain_spec(n, schedule, init, horizon).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

/// Time-homogeneous market. With `nonzero_c` the weights satisfy
/// `C_ij ≥ C_ii`, so `σ ≤ 0` and the short rate stays above `D`.
pub fn random_market(rng: &mut ChaCha8Rng, n: usize, nonzero_c: bool) -> MarketSpec {
    let a = random_generator(rng, n, 2.0);
    let chain = ChainSpec::constant(a, rng.gen_range(0..n), 1.0).unwrap();
    let c = if nonzero_c {
        let diag = random_vector(rng, n, -0.2, 0.2);
        DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { diag[i] + rng.gen_range(0.0..0.15) })
    } else {
        DMatrix::zeros(n, n)
    };
    let d = random_vector(rng, n, 0.01, 0.1);
    let dividends = (0..n).map(|_| random_vector(rng, n, 0.1, 1.0)).collect();
    MarketSpec::constant(chain, c, d, dividends).unwrap()
}

pub fn c0_market() -> MarketSpec {
    MarketSpec::constant(sym2(1.0, 1.0), DMatrix::zeros(2, 2), DVector::from_element(2, 0.05), vec![
        DVector::from_vec(vec![1.0, 0.5]),
        DVector::from_vec(vec![0.5, 1.0]),
    ])
    .unwrap()
}

/// Asymmetric chain, `C ≠ 0` with `σ < 0`, low discount drift.
pub fn sdf_market() -> MarketSpec {
    let chain = ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -2.0]), 0, 1.0).unwrap();
    MarketSpec::constant(
        chain,
        DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]),
        DVector::from_vec(vec![0.01, 0.012]),
        vec![DVector::from_vec(vec![0.2, 0.1]), DVector::from_vec(vec![0.1, 0.3])],
    )
    .unwrap()
}

/// Same chain and weights as [`sdf_market`] with the discount drift doubled
/// from `t = 0.5` on.
pub fn two_regime_market() -> MarketSpec {
    let chain = ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -2.0]), 0, 1.0).unwrap();
    MarketSpec::new(
        chain,
        vec![(0.0, DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]))],
        vec![(0.0, DVector::from_vec(vec![0.01, 0.012])), (0.5, DVector::from_vec(vec![0.02, 0.024]))],
        vec![DVector::from_vec(vec![0.2, 0.1]), DVector::from_vec(vec![0.1, 0.3])],
        1.0,
    )
    .unwrap()
}
