//! The `Ψ` matrix of a state, its seminorm and pseudoinverse, and the
//! contraction check for a driver Lipschitz in `Z`.

use rbsde_chain::chain::{check_contraction, psi_matrix, rate_bound_m, seminorm_sq, ChainSpec};
use rbsde_chain::linalg::{frobenius, penrose_residual, pseudoinverse, DEFAULT_PINV_TOL};
use rbsde_chain::{DMatrix, DVector};

fn main() -> rbsde_chain::Result<()> {
    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.0, 1.0, -1.0, 2.0, 0.0, 0.5, -2.0]);
    let spec = ChainSpec::constant(a, 0, 1.0)?;

    for state in 0..3 {
        let psi = psi_matrix(&spec, 0.0, state)?;
        let dag = pseudoinverse(&psi.matrix, DEFAULT_PINV_TOL);
        println!("state {state}: Ψ = {}", psi.matrix);
        println!("  ‖Ψ†‖_F = {:.6}, penrose residual {:.1e}", frobenius(&dag), penrose_residual(&psi.matrix, &dag));
        let c = DVector::from_vec(vec![1.0, -0.5, 2.0]);
        println!("  ‖c‖² = {:.6}, ‖1‖² = {:.1e}", seminorm_sq(&c, &psi), seminorm_sq(&DVector::from_element(3, 1.0), &psi));
    }

    println!("m = {}", rate_bound_m(&spec));
    for l in [0.05, 0.2, 0.5] {
        let r = check_contraction(&spec, l, 100)?;
        println!("l₂ = {l}: margin {:+.4} (holds {})", r.worst_margin, r.holds);
    }
    Ok(())
}
