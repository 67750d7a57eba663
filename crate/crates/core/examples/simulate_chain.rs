//! Exact paths of a two-piece three-state chain, and the compensated
//! martingale `M = X − X_0 − ∫A X du` along one of them.

use rbsde_chain::chain::{build_chain_spec, martingale_path, simulate_path};
use rbsde_chain::mc::mc_estimate;
use rbsde_chain::DMatrix;

fn main() -> rbsde_chain::Result<()> {
    // columns sum to zero: A[(i, j)] is the rate j -> i
    let calm = DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.0, 1.0, -1.0, 2.0, 0.0, 0.5, -2.0]);
    let busy = &calm * 3.0;
    let spec = build_chain_spec(3, vec![(0.0, calm), (0.5, busy)], 1, 1.0)?;

    let path = simulate_path(&spec, 7);
    println!("seed 7: {} jumps", path.n_jumps());
    for (k, t, s) in path.csv_rows() {
        println!("  {k:>2}  t={t:.4}  state {s}");
    }

    let m = martingale_path(&path, &spec, 4)?;
    for (k, v) in m.iter().enumerate() {
        println!("  M(t_{k}) = {:?}", v.as_slice());
    }

    let jumps = mc_estimate(&spec, |p| p.n_jumps() as f64, 50_000, 1)?;
    println!("mean jump count {:.4} ± {:.4}", jumps.mean, jumps.std_error);
    Ok(())
}
