//! Monte Carlo checks: the isometry, European consistency of the hedging
//! BSDE, and the discounted representation of an American value.

use rbsde_chain::chain::ChainSpec;
use rbsde_chain::hedge::{discounted_value_check, price_american, Payoff};
use rbsde_chain::market::{stock_curves, MarketSpec};
use rbsde_chain::mc::{european_consistency, isometry_check};
use rbsde_chain::{DMatrix, DVector};

fn main() -> rbsde_chain::Result<()> {
    let chain = ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -2.0]), 0, 1.0)?;
    let iso = isometry_check(&chain, &DVector::from_vec(vec![1.0, 0.0]), 100_000, 5)?;
    println!("isometry: {:.5} vs {:.5}, difference {:.1e} ± {:.1e}", iso.lhs.mean, iso.rhs.mean, iso.difference.mean, iso.difference.std_error);

    let market = MarketSpec::constant(
        chain,
        DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]),
        DVector::from_vec(vec![0.01, 0.012]),
        vec![DVector::from_vec(vec![0.2, 0.1]), DVector::from_vec(vec![0.1, 0.3])],
    )?;
    let row = european_consistency(&market, &DVector::from_vec(vec![1.0, 0.5]), 100_000, 1000, 11)?;
    println!("european: BSDE {:.6}, MC {:.6} ± {:.1e}, pass {}", row.lhs, row.rhs, row.std_error, row.pass);

    let curves = stock_curves(&market, 1000, 10.0)?;
    let payoff = Payoff::put(&curves, 0, 0.9)?;
    let sol = price_american(&market, &payoff)?;
    let d = discounted_value_check(&market, &payoff, &sol, 100_000, 12)?;
    println!("american: V_0 {:.6}, stopped MC {:.6} ± {:.1e}, holds {}", d.value, d.stopped.mean, d.stopped.std_error, d.representation_holds);
    Ok(())
}
