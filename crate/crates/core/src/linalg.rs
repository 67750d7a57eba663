//! Small dense linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Default relative eigenvalue cutoff for [`pseudoinverse`].
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Moore–Penrose pseudoinverse of a symmetric matrix.
///
/// Uses the symmetric eigendecomposition `Q = U Λ U'` and inverts only the
/// eigenvalues with `|λ| > tol·max|λ|`. The zero matrix maps to itself.
pub fn pseudoinverse(q: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = q.nrows();
    assert_eq!(n, q.ncols(), "pseudoinverse needs a square matrix");
    // symmetrize away rounding asymmetry before the eigen solve
    let sym = (q + q.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax();
    if scale == 0.0 {
        return DMatrix::zeros(n, n);
    }
    let cutoff = tol * scale;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let u = eig.eigenvectors.column(k);
            out += (u * u.transpose()) / lambda;
        }
    }
    out
}

/// `√(Tr(M'M))`.
pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest residual over the four Penrose identities, each measured as a max-abs entry.
pub fn penrose_residual(q: &DMatrix<f64>, q_dag: &DMatrix<f64>) -> f64 {
    let qqd = q * q_dag;
    let qdq = q_dag * q;
    let r1 = (&qqd * q - q).amax();
    let r2 = (&qdq * q_dag - q_dag).amax();
    let r3 = (qqd.transpose() - &qqd).amax();
    let r4 = (qdq.transpose() - &qdq).amax();
    r1.max(r2).max(r3).max(r4)
}

/// [`penrose_residual`] with each identity divided by the size of the matrix
/// it reproduces, so ill-conditioned inputs are judged at their own scale.
pub fn penrose_residual_relative(q: &DMatrix<f64>, q_dag: &DMatrix<f64>) -> f64 {
    let qqd = q * q_dag;
    let qdq = q_dag * q;
    let scale = |m: &DMatrix<f64>| m.amax().max(f64::MIN_POSITIVE);
    let r1 = (&qqd * q - q).amax() / scale(q);
    let r2 = (&qdq * q_dag - q_dag).amax() / scale(q_dag);
    let r3 = (qqd.transpose() - &qqd).amax();
    let r4 = (qdq.transpose() - &qdq).amax();
    r1.max(r2).max(r3).max(r4)
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.min()
}
