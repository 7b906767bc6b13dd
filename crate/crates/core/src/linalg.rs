//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues at or below this are treated as zero in every nonsingularity
/// check and pseudo-inverse.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Largest singular value (induced 2-norm).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest singular value.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// Symmetric eigendecomposition of `(m + mᵀ)/2`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.max()
}

/// Moore-Penrose inverse of a symmetric PSD matrix through its eigenbasis.
pub fn sym_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let n = m.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > SINGULAR_TOL {
            let q = eig.eigenvectors.column(i);
            inv += (q * q.transpose()) / lambda;
        }
    }
    inv
}

/// Numerical rank of a symmetric matrix.
pub fn sym_rank(m: &DMatrix<f64>) -> usize {
    sym_eigen(m)
        .eigenvalues
        .iter()
        .filter(|l| l.abs() > SINGULAR_TOL)
        .count()
}

/// Solves `m x = rhs`, falling back to the SVD least-squares solution when
/// `m` is singular.
pub fn solve_or_lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if let Some(x) = m.clone().lu().solve(rhs) {
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    m.clone()
        .svd(true, true)
        .solve(rhs, SINGULAR_TOL)
        .expect("svd computed with both factors")
}

/// `‖x‖²_W = xᵀ W x`.
pub fn quad_form(x: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    x.dot(&(w * x))
}
