//! Short rates, the discount factor along a path and the stock price curves
//! of a two-state market with a jumping discount factor.

use rbsde_chain::chain::{simulate_path, ChainSpec};
use rbsde_chain::market::{sdf_path, short_rate, stock_curves, stock_sde_residual, MarketSpec};
use rbsde_chain::mc::deflated_gains_check;
use rbsde_chain::{DMatrix, DVector};

fn main() -> rbsde_chain::Result<()> {
    let chain = ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -2.0]), 0, 1.0)?;
    let market = MarketSpec::constant(
        chain,
        DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]),
        DVector::from_vec(vec![0.01, 0.012]),
        vec![DVector::from_vec(vec![0.2, 0.1]), DVector::from_vec(vec![0.1, 0.3])],
    )?;
    for i in 0..2 {
        println!("r(state {i}) = {:.6}", short_rate(&market, 0.0, i));
    }

    let path = simulate_path(market.chain(), 4);
    let pi = sdf_path(&market, &path, 10)?;
    println!("π on a 10-step grid: {:?}", pi.iter().map(|p| format!("{p:.5}")).collect::<Vec<_>>());

    let curves = stock_curves(&market, 1000, 10.0)?;
    println!("S_0 = {:.5} / {:.5}, bounds [{:.4}, {:.4}]", curves.price(0, 0, 0), curves.price(1, 0, 0), curves.lower_bound, curves.upper_bound);
    println!("stock SDE residual on seed 4: {:.1e}", stock_sde_residual(&market, &curves, &path));
    for j in 0..2 {
        let row = deflated_gains_check(&market, &curves, j, 50_000, 9)?;
        println!("{}: S_0 {:.6} vs {:.6} ± {:.1e}", row.name, row.lhs, row.rhs, row.std_error);
    }
    Ok(())
}
