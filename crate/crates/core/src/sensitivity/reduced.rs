use super::{
    check_len, factor_constraint_jacobian, EquilibriumProblem, GnBlocks, SensitivityError,
};
use crate::dense::DenseMatrix;
use crate::linsolve::SparseFactorization;
use crate::sparse::CscMatrix;

type Result<T> = std::result::Result<T, SensitivityError>;

fn check_point<P: EquilibriumProblem + ?Sized>(prob: &P, x: &[f64], p: &[f64]) -> Result<()> {
    check_len("x", x, prob.n_x())?;
    check_len("p", p, prob.n_p())?;
    if prob.n_c() != prob.n_x() {
        return Err(SensitivityError::DimensionMismatch(format!(
            "n_c = {} must equal n_x = {}",
            prob.n_c(),
            prob.n_x()
        )));
    }
    Ok(())
}

/// `S = -(dc/dx)^{-1} dc/dp`, one back-substitution per column.
pub fn sensitivity_matrix_with(factor: &SparseFactorization, dcdp: &CscMatrix) -> DenseMatrix {
    let (nx, np) = (dcdp.rows(), dcdp.cols());
    let mut s = DenseMatrix::zeros(nx, np);
    let mut rhs = vec![0.0; nx];
    for j in 0..np {
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for (i, v) in dcdp.col(j) {
            rhs[i] = -v;
        }
        factor.solve_into(&rhs, s.col_mut(j));
    }
    s
}

pub fn sensitivity_matrix<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<DenseMatrix> {
    check_point(prob, x, p)?;
    let jac = prob.constraint_jacobians(x, p);
    let factor = factor_constraint_jacobian(&jac.dcdx)?;
    Ok(sensitivity_matrix_with(&factor, &jac.dcdp))
}

/// Solves `(dc/dx)^T y = -(df/dx)^T` and returns `(df/dp + y^T dc/dp, y)`.
pub(crate) fn adjoint_solve(
    factor: &SparseFactorization,
    dcdp: &CscMatrix,
    fx: &[f64],
    fp: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let neg: Vec<f64> = fx.iter().map(|v| -v).collect();
    let y = factor.solve_transpose(&neg);
    let mut g = fp.to_vec();
    dcdp.mul_transpose_add_into(1.0, &y, &mut g);
    (g, y)
}

/// Total derivative `df/dp` by the adjoint method (a single transposed solve).
pub fn adjoint_gradient<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<Vec<f64>> {
    check_point(prob, x, p)?;
    let jac = prob.constraint_jacobians(x, p);
    let factor = factor_constraint_jacobian(&jac.dcdx)?;
    let (fx, fp) = prob.objective_gradient(x, p);
    Ok(adjoint_solve(&factor, &jac.dcdp, &fx, &fp).0)
}

/// `df/dp = df/dp|_x + (df/dx) S` with an explicitly formed `S`; verification only.
pub fn gradient_via_sensitivity<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<Vec<f64>> {
    let s = sensitivity_matrix(prob, x, p)?;
    let (fx, fp) = prob.objective_gradient(x, p);
    let sx = s.matvec_transpose(&fx);
    Ok(fp.iter().zip(&sx).map(|(a, b)| a + b).collect())
}

/// Lagrange multipliers `lambda = -(dc/dx)^{-T} (df/dx)^T` at which the
/// state gradient of the Lagrangian vanishes.
pub fn adjoint_multipliers<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<Vec<f64>> {
    check_point(prob, x, p)?;
    let jac = prob.constraint_jacobians(x, p);
    let factor = factor_constraint_jacobian(&jac.dcdx)?;
    let (fx, _) = prob.objective_gradient(x, p);
    let neg: Vec<f64> = fx.iter().map(|v| -v).collect();
    Ok(factor.solve_transpose(&neg))
}

/// Gauss-Newton blocks `A = Jx^T W Jx`, `B = Jp^T W Jx`, `C = Jp^T W Jp`
/// with `Jx = dr/dx`, `Jp = dr/dp`.
pub fn gn_blocks<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<GnBlocks> {
    check_point(prob, x, p)?;
    let ls = prob
        .residuals(x, p)
        .ok_or(SensitivityError::CapabilityMissing(
            "least-squares residuals",
        ))?;
    let mut c = ls.drdp.transpose_weighted_mul(&ls.w, &ls.drdp)?;
    if let Some(extra) = prob.extra_curvature(x, p) {
        c = c.add_scaled(1.0, &extra)?;
    }
    Ok(GnBlocks {
        a: ls.drdx.transpose_weighted_mul(&ls.w, &ls.drdx)?,
        b: ls.drdp.transpose_weighted_mul(&ls.w, &ls.drdx)?,
        c,
    })
}

/// `S^T A S + B S + S^T B^T + C` for given blocks.
pub fn dense_gn_hessian_from(s: &DenseMatrix, blocks: &GnBlocks) -> Result<DenseMatrix> {
    let as_ = blocks.a.mul_dense(s)?;
    let mut h = s.transpose_matmul(&as_);
    let bs = blocks.b.mul_dense(s)?;
    let np = h.rows();
    for j in 0..np {
        for i in 0..np {
            h[(i, j)] += bs[(i, j)] + bs[(j, i)];
        }
    }
    for (i, j, v) in blocks.c.iter() {
        h[(i, j)] += v;
    }
    Ok(h)
}

/// The reduced Gauss-Newton Hessian, forming `S` explicitly.
pub fn dense_gn_hessian<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<DenseMatrix> {
    let blocks = gn_blocks(prob, x, p)?;
    let s = sensitivity_matrix(prob, x, p)?;
    dense_gn_hessian_from(&s, &blocks)
}

/// Generalized Gauss-Newton blocks: the objective's own second derivatives.
pub fn ggn_blocks<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<GnBlocks> {
    check_point(prob, x, p)?;
    prob.objective_hessian(x, p)
        .ok_or(SensitivityError::CapabilityMissing(
            "objective second derivatives",
        ))
}

/// Second derivatives of the Lagrangian `f + lambda^T c`.
pub fn lagrangian_blocks<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    lambda: &[f64],
) -> Result<GnBlocks> {
    check_len("lambda", lambda, prob.n_c())?;
    let f = ggn_blocks(prob, x, p)?;
    let c = prob
        .constraint_curvature(x, p, lambda)
        .ok_or(SensitivityError::CapabilityMissing(
            "constraint second derivatives",
        ))?;
    Ok(f.add(&c)?)
}

/// Exact reduced Hessian `d2f/dp2`.
///
/// The second-order sensitivity term `(df/dx) d2x/dp2` is folded into the
/// Lagrangian curvature evaluated at the adjoint multipliers, so the result
/// is `S^T L_xx S + L_px S + S^T L_px^T + L_pp`.
pub fn dense_full_hessian<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<DenseMatrix> {
    let lambda = adjoint_multipliers(prob, x, p)?;
    let blocks = lagrangian_blocks(prob, x, p, &lambda)?;
    let s = sensitivity_matrix(prob, x, p)?;
    dense_gn_hessian_from(&s, &blocks)
}
