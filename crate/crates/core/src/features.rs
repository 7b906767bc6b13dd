//! Linear feature maps over finite state spaces and Bellman-error basis
//! (BEBF) construction.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::mdp::{FiniteMdp, Policy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("state {0} out of range")]
    OutOfRange(usize),
    #[error("feature entry {value} exceeds declared bound {bound}")]
    BoundExceeded { value: f64, bound: f64 },
    #[error("non-finite feature entry")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// The Bellman residual vanished after `added` new columns: the value
    /// function is already representable. `basis` holds the columns built so far.
    #[error("Bellman residual vanished after adding {added} columns")]
    DegenerateResidual { added: usize, basis: FeatureMatrix },
}

/// `|S| × d` matrix whose row `s` is `φ(s)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    matrix: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, FeatureError> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        Ok(Self { matrix })
    }

    pub fn n_states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, s: usize) -> DVector<f64> {
        self.matrix.row(s).transpose()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }

    /// One row per state, columns `phi_0..phi_{d-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["state".to_string()];
        header.extend((0..self.dim()).map(|i| format!("phi_{i}")));
        w.write_record(&header)?;
        for s in 0..self.n_states() {
            let mut rec = vec![s.to_string()];
            rec.extend(self.matrix.row(s).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Feature map `φ: S → R^d` with a declared bound `L ≥ max_s ‖φ(s)‖_∞`,
/// verified by scanning every state at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    table: FeatureMatrix,
    bound: f64,
}

impl FeatureMap {
    /// Bound taken as the largest absolute entry.
    pub fn from_matrix(table: FeatureMatrix) -> Self {
        let bound = table.max_abs();
        Self { table, bound }
    }

    pub fn with_bound(table: FeatureMatrix, bound: f64) -> Result<Self, FeatureError> {
        let value = table.max_abs();
        if value > bound {
            return Err(FeatureError::BoundExceeded { value, bound });
        }
        Ok(Self { table, bound })
    }

    pub fn from_fn<F>(n_states: usize, dim: usize, mut f: F) -> Result<Self, FeatureError>
    where
        F: FnMut(usize) -> Vec<f64>,
    {
        let mut m = DMatrix::zeros(n_states, dim);
        for s in 0..n_states {
            let row = f(s);
            if row.len() != dim {
                return Err(FeatureError::Shape(format!("state {s} produced {} features", row.len())));
            }
            for (j, v) in row.into_iter().enumerate() {
                m[(s, j)] = v;
            }
        }
        Ok(Self::from_matrix(FeatureMatrix::new(m)?))
    }

    /// Indicator basis, `Φ = I`.
    pub fn tabular(n_states: usize) -> Self {
        Self { table: FeatureMatrix { matrix: DMatrix::identity(n_states, n_states) }, bound: 1.0 }
    }

    /// Every state maps to `1/√d · (1, …, 1)`.
    pub fn constant(n_states: usize, dim: usize) -> Self {
        let v = 1.0 / (dim as f64).sqrt();
        Self { table: FeatureMatrix { matrix: DMatrix::from_element(n_states, dim, v) }, bound: v }
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn n_states(&self) -> usize {
        self.table.n_states()
    }

    /// Declared `L`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn table(&self) -> &FeatureMatrix {
        &self.table
    }

    pub fn featurize(&self, s: usize) -> Result<DVector<f64>, FeatureError> {
        if s >= self.n_states() {
            return Err(FeatureError::OutOfRange(s));
        }
        Ok(self.table.row(s))
    }

    pub fn feature_matrix(&self, mdp: &FiniteMdp) -> Result<FeatureMatrix, FeatureError> {
        if mdp.n_states() != self.n_states() {
            return Err(FeatureError::Shape(format!(
                "map covers {} states, MDP has {}",
                self.n_states(),
                mdp.n_states()
            )));
        }
        Ok(self.table.clone())
    }
}

/// Residual norm below which a Bellman-error column is considered zero.
pub const BEBF_RESIDUAL_TOL: f64 = 1e-10;

fn xi_norm(v: &DVector<f64>, xi: &DVector<f64>) -> f64 {
    v.iter().zip(xi.iter()).map(|(a, w)| w * a * a).sum::<f64>().sqrt()
}

/// Removes from `v` its ξ-projection onto the columns of `basis`.
fn xi_orthogonalize(v: &mut DVector<f64>, basis: &DMatrix<f64>, xi: &DVector<f64>) {
    if basis.ncols() == 0 {
        return;
    }
    let weighted = DMatrix::from_diagonal(xi);
    let gram = basis.transpose() * &weighted * basis;
    let pinv = linalg::sym_pinv(&gram);
    // Two passes keep the result orthogonal to working precision.
    for _ in 0..2 {
        let coef = &pinv * (basis.transpose() * (&weighted * &*v));
        *v -= basis * coef;
    }
}

/// Appends `k` Bellman-error basis functions to `current`.
///
/// Each new column is the Bellman residual `T^π v̂ - v̂` of the ξ-weighted
/// TD fixed point `v̂` on the current columns, ξ-orthogonalized against them
/// and normalized to unit ξ-norm.
pub fn bebf_expand(
    mdp: &FiniteMdp,
    policy: &Policy,
    xi: &DVector<f64>,
    current: &FeatureMatrix,
    k: usize,
) -> Result<FeatureMatrix, FeatureError> {
    let n = mdp.n_states();
    if current.n_states() != n || xi.len() != n {
        return Err(FeatureError::Shape("basis, distribution and MDP disagree on |S|".into()));
    }
    let p = mdp.induced_chain(policy);
    let r = mdp.induced_reward(policy);
    let gamma = mdp.gamma();
    let weighted = DMatrix::from_diagonal(xi);
    let mut basis = current.matrix.clone();
    for added in 0..k {
        let theta = if basis.ncols() == 0 {
            DVector::zeros(0)
        } else {
            let ident = DMatrix::<f64>::identity(n, n);
            let a = basis.transpose() * &weighted * (&ident - &p * gamma) * &basis;
            let b = basis.transpose() * &weighted * &r;
            linalg::solve_or_lstsq(&a, &b)
        };
        let v_hat = &basis * &theta;
        let mut residual = &r + &p * &v_hat * gamma - &v_hat;
        xi_orthogonalize(&mut residual, &basis, xi);
        let norm = xi_norm(&residual, xi);
        if norm < BEBF_RESIDUAL_TOL {
            return Err(FeatureError::DegenerateResidual { added, basis: FeatureMatrix { matrix: basis } });
        }
        residual /= norm;
        let cols = basis.ncols();
        basis = basis.insert_column(cols, 0.0);
        basis.set_column(cols, &residual);
    }
    FeatureMatrix::new(basis)
}

/// Extends `current` to `dim` columns with ξ-orthonormal completions of unit
/// vectors, skipping any that are already spanned.
pub fn complete_basis(current: &FeatureMatrix, xi: &DVector<f64>, dim: usize) -> FeatureMatrix {
    let n = current.n_states();
    let mut basis = current.matrix.clone();
    let mut unit = 0;
    while basis.ncols() < dim && unit < n {
        let mut v = DVector::zeros(n);
        v[unit] = 1.0;
        unit += 1;
        xi_orthogonalize(&mut v, &basis, xi);
        let norm = xi_norm(&v, xi);
        if norm < 1e-8 {
            continue;
        }
        v /= norm;
        let cols = basis.ncols();
        basis = basis.insert_column(cols, 0.0);
        basis.set_column(cols, &v);
    }
    FeatureMatrix { matrix: basis }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::true_values;

    #[test]
    fn tabular_is_one_hot() {
        let map = FeatureMap::tabular(5);
        let phi = map.featurize(3).unwrap();
        assert_eq!(phi.as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(map.featurize(5), Err(FeatureError::OutOfRange(5)));
        assert_eq!(map.table().as_matrix(), &DMatrix::identity(5, 5));
    }

    #[test]
    fn constant_map() {
        let map = FeatureMap::constant(3, 4);
        for s in 0..3 {
            assert!(map.featurize(s).unwrap().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn declared_bound_is_enforced() {
        let m = FeatureMatrix::new(DMatrix::from_row_slice(2, 1, &[1.0, -3.0])).unwrap();
        assert!(matches!(FeatureMap::with_bound(m.clone(), 2.0), Err(FeatureError::BoundExceeded { .. })));
        assert_eq!(FeatureMap::with_bound(m, 3.0).unwrap().bound(), 3.0);
    }

    fn two_state() -> (FiniteMdp, Policy) {
        let mdp = FiniteMdp::new(
            vec![vec![vec![0.2, 0.8]], vec![vec![0.6, 0.4]]],
            vec![vec![1.0], vec![0.0]],
            0.5,
        )
        .unwrap();
        (mdp, Policy::new(vec![vec![1.0], vec![1.0]]).unwrap())
    }

    #[test]
    fn bebf_from_exact_value_is_degenerate() {
        let (mdp, pi) = two_state();
        let v = true_values(&mdp, &pi);
        let start = FeatureMatrix::new(DMatrix::from_column_slice(2, 1, v.as_slice())).unwrap();
        let xi = DVector::from_vec(vec![0.5, 0.5]);
        match bebf_expand(&mdp, &pi, &xi, &start, 1) {
            Err(FeatureError::DegenerateResidual { added: 0, .. }) => {}
            other => panic!("expected degenerate residual, got {other:?}"),
        }
    }

    #[test]
    fn bebf_two_state_closed_form() {
        // Constant column 1; ξ = (0.5, 0.5). TD fixed point: θ solves
        // ΦᵀΞ(I - γP)Φ θ = ΦᵀΞR, i.e. (1 - γ) θ = 0.5, θ = 1.
        // T v̂ - v̂ = R + γ P 1 - 1 = (1 + 0.5 - 1, 0 + 0.5 - 1) = (0.5, -0.5).
        let (mdp, pi) = two_state();
        let start = FeatureMatrix::new(DMatrix::from_element(2, 1, 1.0)).unwrap();
        let xi = DVector::from_vec(vec![0.5, 0.5]);
        let out = bebf_expand(&mdp, &pi, &xi, &start, 1).unwrap();
        let col = out.as_matrix().column(1);
        assert!((col[0] - 1.0).abs() < 1e-12 && (col[1] + 1.0).abs() < 1e-12, "{col}");
    }

    #[test]
    fn completion_reaches_full_rank() {
        let start = FeatureMatrix::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let xi = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let full = complete_basis(&start, &xi, 3);
        assert_eq!(full.dim(), 3);
        let gram = full.as_matrix().transpose() * DMatrix::from_diagonal(&xi) * full.as_matrix();
        assert_eq!(linalg::sym_rank(&gram), 3);
    }

    #[test]
    fn csv_has_one_row_per_state() {
        let mut buf = Vec::new();
        FeatureMap::tabular(3).table().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap(), "state,phi_0,phi_1,phi_2");
    }
}
