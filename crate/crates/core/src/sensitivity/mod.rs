//! Derivatives of `f(x(p), p)` through the equilibrium map `c(x, p) = 0`.
//!
//! Production paths (adjoint gradient, sparse KKT assembly) never form the
//! sensitivity matrix `S = dx/dp`; it is computed only by the dense
//! Gauss-Newton path and by verification code.

mod kkt;
mod reduced;

use thiserror::Error;

use crate::linsolve::{factor_sparse, SolveError, SparseFactorization};
use crate::sim::SimError;
use crate::sparse::{CscMatrix, SparseError};

pub(crate) use kkt::kkt_newton_with_blocks;
pub use kkt::{assemble_kkt_newton, assemble_sgn, solve_block_gn, KktSystem};
pub(crate) use reduced::adjoint_solve;
pub use reduced::{
    adjoint_gradient, adjoint_multipliers, dense_full_hessian, dense_gn_hessian,
    dense_gn_hessian_from, ggn_blocks, gn_blocks, gradient_via_sensitivity, lagrangian_blocks,
    sensitivity_matrix, sensitivity_matrix_with,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("constraint Jacobian dc/dx is singular (pivot {pivot})")]
    SingularConstraintJacobian { pivot: usize },
    #[error("problem does not provide {0}")]
    CapabilityMissing(&'static str),
    #[error("block solve needs a square dc/dp, got {n_c}x{n_p}")]
    NonSquareParamJacobian { n_c: usize, n_p: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Weighted least-squares decomposition `f = sum_i w_i/2 r_i^2`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    pub drdx: CscMatrix,
    pub drdp: CscMatrix,
}

impl LeastSquares {
    pub fn value(&self) -> f64 {
        self.r
            .iter()
            .zip(&self.w)
            .map(|(r, w)| 0.5 * w * r * r)
            .sum()
    }
}

/// Hessian-shaped blocks: `a` is `n_x x n_x`, `b` is `n_p x n_x`, `c` is `n_p x n_p`.
///
/// Holds Gauss-Newton blocks, objective second derivatives, or constraint
/// curvature contractions depending on where it came from.
#[derive(Debug, Clone)]
pub struct GnBlocks {
    pub a: CscMatrix,
    pub b: CscMatrix,
    pub c: CscMatrix,
}

impl GnBlocks {
    pub fn zeros(n_x: usize, n_p: usize) -> Self {
        Self {
            a: CscMatrix::zeros(n_x, n_x),
            b: CscMatrix::zeros(n_p, n_x),
            c: CscMatrix::zeros(n_p, n_p),
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.rows()
    }

    pub fn n_p(&self) -> usize {
        self.c.rows()
    }

    pub fn add(&self, other: &GnBlocks) -> Result<GnBlocks, SparseError> {
        Ok(GnBlocks {
            a: self.a.add_scaled(1.0, &other.a)?,
            b: self.b.add_scaled(1.0, &other.b)?,
            c: self.c.add_scaled(1.0, &other.c)?,
        })
    }

    /// `A + tau I`, `C + tau I`.
    pub fn regularized(&self, tau: f64) -> Result<GnBlocks, SparseError> {
        Ok(GnBlocks {
            a: self.a.add_diagonal(&vec![tau; self.n_x()])?,
            b: self.b.clone(),
            c: self.c.add_diagonal(&vec![tau; self.n_p()])?,
        })
    }
}

/// `dc/dx` (n_c x n_x) and `dc/dp` (n_c x n_p).
#[derive(Debug, Clone)]
pub struct ConstraintJacobians {
    pub dcdx: CscMatrix,
    pub dcdp: CscMatrix,
}

/// An equality-constrained problem `min f(x, p) s.t. c(x, p) = 0` with
/// exactly as many constraints as states.
///
/// Second-order evaluators are optional; the defaults report the capability
/// as missing.
pub trait EquilibriumProblem {
    fn n_x(&self) -> usize;
    fn n_p(&self) -> usize;

    fn n_c(&self) -> usize {
        self.n_x()
    }

    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64>;
    fn constraint_jacobians(&self, x: &[f64], p: &[f64]) -> ConstraintJacobians;

    fn objective(&self, x: &[f64], p: &[f64]) -> f64;
    /// `(df/dx, df/dp)` as dense vectors.
    fn objective_gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>);

    /// Solves `c(x, p) = 0` for `x`, optionally warm-started.
    fn solve_equilibrium(&self, p: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>, SimError>;

    /// Parameters the benchmarks start from.
    fn initial_parameters(&self) -> Vec<f64>;

    fn residuals(&self, _x: &[f64], _p: &[f64]) -> Option<LeastSquares> {
        None
    }

    /// `(d2f/dx2, d2f/dpdx, d2f/dp2)`.
    fn objective_hessian(&self, _x: &[f64], _p: &[f64]) -> Option<GnBlocks> {
        None
    }

    /// `sum_i lambda_i` times the second derivatives of `c_i`, in the same block layout.
    fn constraint_curvature(&self, _x: &[f64], _p: &[f64], _lambda: &[f64]) -> Option<GnBlocks> {
        None
    }

    /// Curvature in `p` outside the least-squares residuals (e.g. a barrier),
    /// added to the Gauss-Newton `C` block.
    fn extra_curvature(&self, _x: &[f64], _p: &[f64]) -> Option<CscMatrix> {
        None
    }

    /// Elementwise `(lower, upper)` parameter bounds.
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

pub(crate) fn factor_constraint_jacobian(
    dcdx: &CscMatrix,
) -> Result<SparseFactorization, SensitivityError> {
    factor_sparse(dcdx).map_err(|e| match e {
        SolveError::SingularMatrix { pivot } => {
            SensitivityError::SingularConstraintJacobian { pivot }
        }
        other => SensitivityError::Solve(other),
    })
}

pub(crate) fn check_len(what: &str, v: &[f64], n: usize) -> Result<(), SensitivityError> {
    if v.len() != n {
        return Err(SensitivityError::DimensionMismatch(format!(
            "{what}: expected length {n}, found {}",
            v.len()
        )));
    }
    Ok(())
}
