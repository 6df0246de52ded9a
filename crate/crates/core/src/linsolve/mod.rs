//! Linear solvers for every search-direction method.
//!
//! * [`factor_sparse`]: sparse LU used for constraint Jacobians and KKT matrices.
//! * [`solve_kkt_stabilized`]: signed diagonal stabilization, sparse `L D L^T`, BiCGSTAB refinement.
//! * [`cholesky_dense`]: dense SPD factorization for the reduced Hessian.
//! * [`cg_reduced`]: matrix-free conjugate gradients on the reduced operator.

mod cholesky;
mod krylov;
mod ldlt;
mod lu;
mod stabilized;

use thiserror::Error;

use crate::sparse::SparseError;

pub use cholesky::{cholesky_dense, DenseFactorization};
pub use krylov::{
    bicgstab, cg_reduced, BicgstabOutcome, LinearOperator, Preconditioner, ReducedGnOperator,
    DEFAULT_CG_ETA,
};
pub use ldlt::{LdltFactorization, DEFAULT_PIVOT_DELTA, DEFAULT_PIVOT_EPSILON};
pub use lu::{factor_sparse, SparseFactorization, DEFAULT_PIVOT_THRESHOLD};
pub use stabilized::{
    solve_kkt_stabilized, stabilization_diagonal, stabilized_matrix, StabilizationConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular: no usable pivot at elimination step {pivot}")]
    SingularMatrix { pivot: usize },
    #[error("matrix is not positive definite: non-positive pivot at {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("iteration did not converge after {iterations} iterations (best relative residual {best_residual:e})")]
    NoConvergence {
        iterations: usize,
        best_residual: f64,
    },
    #[error("negative curvature {curvature:e} encountered at CG iteration {iteration}")]
    NegativeCurvature {
        iteration: usize,
        curvature: f64,
        /// iterate before the failing step
        last_iterate: Vec<f64>,
    },
    #[error("invalid stabilization parameter: {0}")]
    InvalidConfig(String),
    #[error("fill-reducing ordering failed: {0}")]
    Ordering(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Accuracy and cost of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    /// `‖A x - b‖ / ‖b‖` against the unmodified matrix
    pub relative_residual: f64,
    /// BiCGSTAB refinement steps or CG iterations
    pub iterations: usize,
    pub factor_time_s: f64,
    pub solve_time_s: f64,
    /// stored entries of the sparse factors, when a sparse factorization was used
    pub fill_nnz: usize,
}
