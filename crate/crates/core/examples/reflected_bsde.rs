//! A reflected BSDE with a moving obstacle: the reflected scheme, the Snell
//! envelope, penalization and the optimal stopping time.

use rbsde_chain::bsde::ZeroDriver;
use rbsde_chain::chain::{simulate_path, ChainSpec};
use rbsde_chain::rbsde::{
    optimal_stop_time, penalization_limit, skorokhod_integral, snell_oracle, solve_reflected, Obstacle,
};
use rbsde_chain::{DMatrix, DVector, TimeGrid};

fn main() -> rbsde_chain::Result<()> {
    let spec = ChainSpec::constant(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]), 0, 1.0)?;
    let steps = 1000;
    let grid = TimeGrid::new(1.0, steps)?;
    // exercising pays only in state 1, and less as time runs out
    let g = Obstacle::from_fn(grid, 2, |t, i| if i == 1 { 0.9 - 0.5 * t } else { 0.0 })?;
    let xi = DVector::from_vec(vec![0.5, 0.4]);

    let sol = solve_reflected(&spec, &ZeroDriver, &xi, &g, steps)?;
    let snell = snell_oracle(&spec, &ZeroDriver, &xi, &g, steps)?;
    println!("V_0 = {:.8}, K_T = {:?}", sol.initial_value(0), sol.k.terminal().as_slice());
    println!("vs Snell envelope {:.1e}, skorokhod {:.1e}", sol.v.sup_distance(&snell), skorokhod_integral(&sol, &g));

    let pen = penalization_limit(&spec, &ZeroDriver, &xi, &g, steps, 1e-3)?;
    for (n, d) in pen.penalization_trace.as_deref().unwrap_or_default() {
        println!("  n = {n:>6}: sup distance {d:.3e}");
    }

    for seed in 0..8 {
        let path = simulate_path(&spec, seed);
        println!("seed {seed}: stop at {:.3}", optimal_stop_time(&sol, &g, &path));
    }
    Ok(())
}
