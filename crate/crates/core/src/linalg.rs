//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Eigenvalues below `rel_tol * max_eig` are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-12;

/// Moore-Penrose pseudo-inverse of a Hermitian positive semidefinite matrix.
///
/// The input is symmetrised first so that round-off in its construction does
/// not leak into the eigendecomposition.
pub fn hermitian_pinv(a: &CMat, rel_tol: f64) -> CMat {
    let n = a.nrows();
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let max_eig = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    let mut out = CMat::zeros(n, n);
    if max_eig == 0.0 || !max_eig.is_finite() {
        return out;
    }
    let cutoff = rel_tol * max_eig;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            let col = eig.eigenvectors.column(i);
            out += (col * col.adjoint()).unscale(lam);
        }
    }
    out
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_hermitian_eigenvalue(a: &CMat) -> f64 {
    let sym = (a + a.adjoint()).scale(0.5);
    nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
}

#[inline]
pub fn cexp_j(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
