use super::reduced::adjoint_solve;
use super::{
    check_len, factor_constraint_jacobian, lagrangian_blocks, ConstraintJacobians,
    EquilibriumProblem, GnBlocks, SensitivityError,
};
use crate::linsolve::factor_sparse;
use crate::sparse::{stack_kkt_blocks, CscMatrix};

type Result<T> = std::result::Result<T, SensitivityError>;

/// A saddle-point system with unknowns ordered `(dx, dp, dlambda)`.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    pub n_x: usize,
    pub n_p: usize,
    pub n_c: usize,
}

impl KktSystem {
    pub fn new(matrix: CscMatrix, rhs: Vec<f64>, n_x: usize, n_p: usize) -> Result<Self> {
        let n = 2 * n_x + n_p;
        if matrix.rows() != n || matrix.cols() != n || rhs.len() != n {
            return Err(SensitivityError::DimensionMismatch(format!(
                "kkt system with n_x={n_x}, n_p={n_p} needs {n}x{n} matrix and length-{n} rhs, got {}x{} and {}",
                matrix.rows(),
                matrix.cols(),
                rhs.len()
            )));
        }
        Ok(Self {
            matrix,
            rhs,
            n_x,
            n_p,
            n_c: n_x,
        })
    }

    /// Gauss-Newton saddle-point system with right-hand side `(0, -g, 0)`.
    pub fn gauss_newton(
        blocks: &GnBlocks,
        jac: &ConstraintJacobians,
        grad: &[f64],
    ) -> Result<Self> {
        let (n_x, n_p) = (blocks.n_x(), blocks.n_p());
        check_len("gradient", grad, n_p)?;
        let matrix = stack_kkt_blocks(&blocks.a, &blocks.b, &blocks.c, &jac.dcdx, &jac.dcdp)?;
        let mut rhs = vec![0.0; 2 * n_x + n_p];
        for (r, g) in rhs[n_x..n_x + n_p].iter_mut().zip(grad) {
            *r = -g;
        }
        Self::new(matrix, rhs, n_x, n_p)
    }

    pub fn dim(&self) -> usize {
        self.n_x + self.n_p + self.n_c
    }

    /// Splits a solution into `(dx, dp, dlambda)`.
    pub fn split_solution<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (dx, rest) = z.split_at(self.n_x);
        let (dp, dl) = rest.split_at(self.n_p);
        (dx, dp, dl)
    }
}

/// Sparse Gauss-Newton system for the given Hessian blocks, with the
/// gradient obtained by the adjoint method.
pub fn assemble_sgn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    blocks: &GnBlocks,
) -> Result<KktSystem> {
    check_len("x", x, prob.n_x())?;
    check_len("p", p, prob.n_p())?;
    if blocks.n_x() != prob.n_x() || blocks.n_p() != prob.n_p() {
        return Err(SensitivityError::DimensionMismatch(format!(
            "blocks sized for n_x={}, n_p={} but problem has n_x={}, n_p={}",
            blocks.n_x(),
            blocks.n_p(),
            prob.n_x(),
            prob.n_p()
        )));
    }
    let jac = prob.constraint_jacobians(x, p);
    let factor = factor_constraint_jacobian(&jac.dcdx)?;
    let (fx, fp) = prob.objective_gradient(x, p);
    let (g, _) = adjoint_solve(&factor, &jac.dcdp, &fx, &fp);
    KktSystem::gauss_newton(blocks, &jac, &g)
}

/// Block substitution for `B = 0`, `C = 0` and square `dc/dp`:
/// `dp = (dc/dp)^{-1} (dc/dx) A^{-1} (df/dx)^T`.
pub fn solve_block_gn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    a: &CscMatrix,
) -> Result<Vec<f64>> {
    check_len("x", x, prob.n_x())?;
    check_len("p", p, prob.n_p())?;
    if prob.n_p() != prob.n_c() {
        return Err(SensitivityError::NonSquareParamJacobian {
            n_c: prob.n_c(),
            n_p: prob.n_p(),
        });
    }
    let jac = prob.constraint_jacobians(x, p);
    let (fx, _) = prob.objective_gradient(x, p);
    let dy = factor_sparse(a)?.solve(&fx);
    let rhs = jac.dcdx.spmv(&dy)?;
    Ok(factor_sparse(&jac.dcdp)?.solve(&rhs))
}

/// Newton system on the Lagrangian `f + lambda^T c`: blocks are the
/// Lagrangian second derivatives and the right-hand side is
/// `-(df/dx^T + dc/dx^T lambda, df/dp^T + dc/dp^T lambda, c)`.
pub fn assemble_kkt_newton<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    lambda: &[f64],
) -> Result<KktSystem> {
    check_len("x", x, prob.n_x())?;
    check_len("p", p, prob.n_p())?;
    let blocks = lagrangian_blocks(prob, x, p, lambda)?;
    kkt_newton_with_blocks(prob, x, p, lambda, &blocks)
}

pub(crate) fn kkt_newton_with_blocks<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    lambda: &[f64],
    blocks: &GnBlocks,
) -> Result<KktSystem> {
    let (n_x, n_p) = (prob.n_x(), prob.n_p());
    let jac = prob.constraint_jacobians(x, p);
    let (fx, fp) = prob.objective_gradient(x, p);
    let c = prob.constraints(x, p);
    let matrix = stack_kkt_blocks(&blocks.a, &blocks.b, &blocks.c, &jac.dcdx, &jac.dcdp)?;
    let mut lx = fx;
    jac.dcdx.mul_transpose_add_into(1.0, lambda, &mut lx);
    let mut lp = fp;
    jac.dcdp.mul_transpose_add_into(1.0, lambda, &mut lp);
    let rhs: Vec<f64> = lx.iter().chain(&lp).chain(&c).map(|v| -v).collect();
    KktSystem::new(matrix, rhs, n_x, n_p)
}
