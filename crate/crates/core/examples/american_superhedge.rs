//! An American put priced as a reflected BSDE, its superhedging strategy and
//! forward replication along simulated paths.

use rbsde_chain::chain::{simulate_path, ChainSpec};
use rbsde_chain::hedge::{contraction_report, extract_hedge, price_american, replicate_forward, Payoff};
use rbsde_chain::market::{stock_curves, MarketSpec};
use rbsde_chain::{DMatrix, DVector};

fn main() -> rbsde_chain::Result<()> {
    let chain = ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]), 0, 1.0)?;
    let market = MarketSpec::constant(chain, DMatrix::zeros(2, 2), DVector::from_element(2, 0.05), vec![
        DVector::from_vec(vec![1.0, 0.5]),
        DVector::from_vec(vec![0.5, 1.0]),
    ])?;
    let steps = 2000;
    let curves = stock_curves(&market, steps, 10.0)?;
    let payoff = Payoff::put(&curves, 0, 15.1)?;

    let report = contraction_report(&market, steps)?;
    println!("c6 = {:.4}, contraction margin {:+.4}", report.constants.c6, report.contraction.worst_margin);

    let sol = price_american(&market, &payoff)?;
    println!("V_0 = {:.6} / {:.6}, K_T = {:?}", sol.initial_value(0), sol.initial_value(1), sol.k.terminal().as_slice());

    let strategy = extract_hedge(&market, &curves, &sol)?;
    println!("h(0, state 0) = {:?}, h0 = {:.6}", strategy.holdings(0, 0).as_slice(), strategy.h0.at(0, 0));
    for seed in 0..5 {
        let r = replicate_forward(&market, &curves, &strategy, &sol, &payoff, &simulate_path(market.chain(), seed));
        println!("seed {seed}: max gap {:.1e}, dominates {}", r.max_gap, r.dominates);
    }
    Ok(())
}
