//! Search directions for equilibrium-constrained optimization.
//!
//! A problem couples design parameters `p` to a state `x` through `c(x, p) = 0`
//! and minimizes `f(x, p)`. The Gauss-Newton step over `p` can be computed from
//! the dense reduced Hessian (expensive: one back-substitution per parameter)
//! or from a sparse symmetric saddle-point system of size `2 n_x + n_p` that
//! yields the same step. This crate implements both, the surrounding solvers,
//! and the forward simulators that define `x(p)`.
//!
//! Modules:
//! * [`sparse`], [`dense`]: matrix containers.
//! * [`linsolve`]: sparse LU and `L D L^T`, stabilized KKT solve, dense Cholesky, reduced CG.
//! * [`sensitivity`]: adjoint gradients, Gauss-Newton blocks, KKT assembly.
//! * [`sim`]: static equilibrium and time-stepped rollouts.
//! * [`problems`]: spring bar, car control, cloth control, toy and random problems.
//! * [`optimize`]: outer minimization loops and search-direction strategies.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dense;
pub mod linsolve;
pub mod optimize;
pub mod problems;
pub mod sensitivity;
pub mod sim;
pub mod sparse;

pub use dense::{DenseMatrix, DenseVector};
pub use linsolve::{SolveError, SolveReport, StabilizationConfig};
pub use sensitivity::{EquilibriumProblem, GnBlocks, KktSystem, SensitivityError};
pub use sparse::{CscMatrix, SparseError, TripletMatrix};
