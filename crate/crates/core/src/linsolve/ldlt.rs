//! Sparse symmetric `L D L^T` for saddle-point matrices.
//!
//! The ordering is a symmetric AMD permutation and no pivoting is done, so
//! fill follows the symbolic prediction. Pivots smaller than
//! `pivot_epsilon * max|A|` are replaced by `±pivot_delta * max|A|`; the
//! result is then only a preconditioner and callers refine against the
//! original matrix.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use super::SolveError;
use crate::sparse::CscMatrix;

pub const DEFAULT_PIVOT_EPSILON: f64 = 1e-13;
pub const DEFAULT_PIVOT_DELTA: f64 = 1e-8;

#[derive(Debug)]
pub struct LdltFactorization {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl LdltFactorization {
    /// Factorizes the symmetric matrix `m`; only its lower triangle is read.
    pub fn new(m: &CscMatrix, pivot_epsilon: f64, pivot_delta: f64) -> Result<Self, SolveError> {
        if m.rows() != m.cols() {
            return Err(SolveError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let n = m.rows();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, m.col_ptr(), None, m.row_idx());
        let symbolic = factorize_symbolic_cholesky(
            sym,
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| SolveError::Ordering(format!("{e:?}")))?;
        let scale = m.max_abs();
        let mut values = vec![0.0; symbolic.len_val()];
        let regularization = LdltRegularization {
            dynamic_regularization_signs: None,
            dynamic_regularization_delta: pivot_delta * scale,
            dynamic_regularization_epsilon: pivot_epsilon * scale,
        };
        let params = Default::default();
        let mut mem =
            MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, params));
        let a = SparseColMatRef::new(sym, m.values());
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                a,
                Side::Lower,
                regularization,
                Par::Seq,
                MemStack::new(&mut mem),
                params,
            )
            .map_err(|e| match e {
                faer::linalg::cholesky::ldlt::factor::LdltError::ZeroPivot { index } => {
                    SolveError::SingularMatrix { pivot: index }
                }
            })?;
        let out = Self { symbolic, values };
        if out.values.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::SingularMatrix { pivot: n });
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.symbolic.nrows()
    }

    /// Stored entries of `L` including the diagonal.
    pub fn fill_nnz(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs dimension");
        let mut x = b.to_vec();
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        let rhs = MatMut::from_column_major_slice_mut(&mut x, n, 1);
        LdltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            rhs,
            Par::Seq,
            MemStack::new(&mut mem),
        );
        x
    }
}
