use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use super::SolveError;
use crate::dense::DenseMatrix;

/// Dense Cholesky factor `H = L L^T`.
#[derive(Debug, Clone)]
pub struct DenseFactorization {
    llt: Llt<f64>,
    n: usize,
}

/// Factorizes a symmetric positive definite matrix. Only the lower triangle is read.
pub fn cholesky_dense(h: &DenseMatrix) -> Result<DenseFactorization, SolveError> {
    if h.rows() != h.cols() {
        return Err(SolveError::NotSquare {
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    let llt = h.as_faer().llt(Side::Lower).map_err(|e| match e {
        faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index } => {
            SolveError::NotPositiveDefinite { pivot: index }
        }
    })?;
    Ok(DenseFactorization { llt, n: h.rows() })
}

impl DenseFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs dimension");
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve() {
        let f = cholesky_dense(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_solve() {
        let h = DenseMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]);
        assert_eq!(
            cholesky_dense(&h).unwrap().solve(&[8.0, 27.0]),
            vec![2.0, 3.0]
        );
    }

    #[test]
    fn indefinite_reports_pivot() {
        let h = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(matches!(
            cholesky_dense(&h),
            Err(SolveError::NotPositiveDefinite { pivot: 1 })
        ));
    }
}
