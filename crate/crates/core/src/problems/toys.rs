//! Small problems with closed-form equilibria and second derivatives.

use crate::dense::DenseMatrix;
use crate::linsolve::factor_sparse;
use crate::sensitivity::{ConstraintJacobians, EquilibriumProblem, GnBlocks, LeastSquares};
use crate::sim::SimError;
use crate::sparse::{CscMatrix, TripletMatrix};

/// `c = x^3 - p`, `f = 1/2 (x - 2)^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarCubic;

impl EquilibriumProblem for ScalarCubic {
    fn n_x(&self) -> usize {
        1
    }
    fn n_p(&self) -> usize {
        1
    }
    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        vec![x[0].powi(3) - p[0]]
    }
    fn constraint_jacobians(&self, x: &[f64], _p: &[f64]) -> ConstraintJacobians {
        ConstraintJacobians {
            dcdx: CscMatrix::from_diagonal(&[3.0 * x[0] * x[0]]),
            dcdp: CscMatrix::from_diagonal(&[-1.0]),
        }
    }
    fn objective(&self, x: &[f64], _p: &[f64]) -> f64 {
        0.5 * (x[0] - 2.0).powi(2)
    }
    fn objective_gradient(&self, x: &[f64], _p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![x[0] - 2.0], vec![0.0])
    }
    fn residuals(&self, x: &[f64], _p: &[f64]) -> Option<LeastSquares> {
        Some(LeastSquares {
            r: vec![x[0] - 2.0],
            w: vec![1.0],
            drdx: CscMatrix::identity(1),
            drdp: CscMatrix::zeros(1, 1),
        })
    }
    fn objective_hessian(&self, _x: &[f64], _p: &[f64]) -> Option<GnBlocks> {
        Some(GnBlocks {
            a: CscMatrix::identity(1),
            b: CscMatrix::zeros(1, 1),
            c: CscMatrix::zeros(1, 1),
        })
    }
    fn constraint_curvature(&self, x: &[f64], _p: &[f64], lambda: &[f64]) -> Option<GnBlocks> {
        Some(GnBlocks {
            a: CscMatrix::from_diagonal(&[6.0 * x[0] * lambda[0]]),
            b: CscMatrix::zeros(1, 1),
            c: CscMatrix::zeros(1, 1),
        })
    }
    fn solve_equilibrium(&self, p: &[f64], _guess: Option<&[f64]>) -> Result<Vec<f64>, SimError> {
        Ok(vec![p[0].cbrt()])
    }
    fn initial_parameters(&self) -> Vec<f64> {
        vec![1.0]
    }
}

/// Two states, two parameters, quadratic constraints:
///
/// ```text
/// c1 = x1 + x1^2/4 - p1
/// c2 = x2 + x2^2/4 + x1 x2/2 - p2 - 0.3 p1^2
/// f  = (x1 - 1)^2/2 + (x2 + 1/2)^2/2 + 0.1 p1 x2 + 0.05 p2^2
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticToy;

impl EquilibriumProblem for QuadraticToy {
    fn n_x(&self) -> usize {
        2
    }
    fn n_p(&self) -> usize {
        2
    }
    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        vec![
            x[0] + 0.25 * x[0] * x[0] - p[0],
            x[1] + 0.25 * x[1] * x[1] + 0.5 * x[0] * x[1] - p[1] - 0.3 * p[0] * p[0],
        ]
    }
    fn constraint_jacobians(&self, x: &[f64], p: &[f64]) -> ConstraintJacobians {
        ConstraintJacobians {
            dcdx: CscMatrix::from_dense(&DenseMatrix::from_rows(&[
                vec![1.0 + 0.5 * x[0], 0.0],
                vec![0.5 * x[1], 1.0 + 0.5 * x[1] + 0.5 * x[0]],
            ])),
            dcdp: CscMatrix::from_dense(&DenseMatrix::from_rows(&[
                vec![-1.0, 0.0],
                vec![-0.6 * p[0], -1.0],
            ])),
        }
    }
    fn objective(&self, x: &[f64], p: &[f64]) -> f64 {
        0.5 * (x[0] - 1.0).powi(2)
            + 0.5 * (x[1] + 0.5).powi(2)
            + 0.1 * p[0] * x[1]
            + 0.05 * p[1] * p[1]
    }
    fn objective_gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            vec![x[0] - 1.0, x[1] + 0.5 + 0.1 * p[0]],
            vec![0.1 * x[1], 0.1 * p[1]],
        )
    }
    fn objective_hessian(&self, _x: &[f64], _p: &[f64]) -> Option<GnBlocks> {
        Some(GnBlocks {
            a: CscMatrix::identity(2),
            b: CscMatrix::from_dense(&DenseMatrix::from_rows(&[vec![0.0, 0.1], vec![0.0, 0.0]])),
            c: CscMatrix::from_diagonal(&[0.0, 0.1]),
        })
    }
    fn constraint_curvature(&self, _x: &[f64], _p: &[f64], l: &[f64]) -> Option<GnBlocks> {
        Some(GnBlocks {
            a: CscMatrix::from_dense(&DenseMatrix::from_rows(&[
                vec![0.5 * l[0], 0.5 * l[1]],
                vec![0.5 * l[1], 0.5 * l[1]],
            ])),
            b: CscMatrix::zeros(2, 2),
            c: CscMatrix::from_diagonal(&[-0.6 * l[1], 0.0]),
        })
    }
    fn solve_equilibrium(&self, p: &[f64], _guess: Option<&[f64]>) -> Result<Vec<f64>, SimError> {
        // roots of a/4 t^2 + b t - q = 0 on the branch through the origin
        let root = |b: f64, q: f64| -> Result<f64, SimError> {
            let disc = b * b + q;
            if disc < 0.0 {
                return Err(SimError::InvalidInput(format!(
                    "no real equilibrium for p = {p:?}"
                )));
            }
            Ok(2.0 * (disc.sqrt() - b))
        };
        let x1 = root(1.0, p[0])?;
        let x2 = root(1.0 + 0.5 * x1, p[1] + 0.3 * p[0] * p[0])?;
        Ok(vec![x1, x2])
    }
    fn initial_parameters(&self) -> Vec<f64> {
        vec![0.2, 0.1]
    }
}

/// Affine constraints and residuals:
/// `c = Jx x + Jp p - b`, `r = Rx x + Rp p - t` with weights `w`.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub jx: CscMatrix,
    pub jp: CscMatrix,
    pub b: Vec<f64>,
    pub rx: CscMatrix,
    pub rp: CscMatrix,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub p0: Vec<f64>,
}

impl LinearProblem {
    /// `c = x - M p`, `f = 1/2 |x - x*|^2`.
    pub fn identity_map(m: &DenseMatrix, x_star: Vec<f64>) -> Self {
        let (nx, np) = (m.rows(), m.cols());
        let mut jp = CscMatrix::from_dense(m);
        jp.scale(-1.0);
        Self {
            jx: CscMatrix::identity(nx),
            jp,
            b: vec![0.0; nx],
            rx: CscMatrix::identity(nx),
            rp: CscMatrix::zeros(nx, np),
            t: x_star,
            w: vec![1.0; nx],
            p0: vec![0.0; np],
        }
    }

    fn residual_vec(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.t.iter().map(|v| -v).collect();
        self.rx.mul_add_into(1.0, x, &mut r);
        self.rp.mul_add_into(1.0, p, &mut r);
        r
    }
}

impl EquilibriumProblem for LinearProblem {
    fn n_x(&self) -> usize {
        self.jx.cols()
    }
    fn n_p(&self) -> usize {
        self.jp.cols()
    }
    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let mut c: Vec<f64> = self.b.iter().map(|v| -v).collect();
        self.jx.mul_add_into(1.0, x, &mut c);
        self.jp.mul_add_into(1.0, p, &mut c);
        c
    }
    fn constraint_jacobians(&self, _x: &[f64], _p: &[f64]) -> ConstraintJacobians {
        ConstraintJacobians {
            dcdx: self.jx.clone(),
            dcdp: self.jp.clone(),
        }
    }
    fn objective(&self, x: &[f64], p: &[f64]) -> f64 {
        self.residual_vec(x, p)
            .iter()
            .zip(&self.w)
            .map(|(r, w)| 0.5 * w * r * r)
            .sum()
    }
    fn objective_gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let wr: Vec<f64> = self
            .residual_vec(x, p)
            .iter()
            .zip(&self.w)
            .map(|(r, w)| r * w)
            .collect();
        (
            self.rx.spmv_transpose(&wr).expect("dims"),
            self.rp.spmv_transpose(&wr).expect("dims"),
        )
    }
    fn residuals(&self, x: &[f64], p: &[f64]) -> Option<LeastSquares> {
        Some(LeastSquares {
            r: self.residual_vec(x, p),
            w: self.w.clone(),
            drdx: self.rx.clone(),
            drdp: self.rp.clone(),
        })
    }
    fn objective_hessian(&self, _x: &[f64], _p: &[f64]) -> Option<GnBlocks> {
        Some(GnBlocks {
            a: self.rx.transpose_weighted_mul(&self.w, &self.rx).ok()?,
            b: self.rp.transpose_weighted_mul(&self.w, &self.rx).ok()?,
            c: self.rp.transpose_weighted_mul(&self.w, &self.rp).ok()?,
        })
    }
    fn constraint_curvature(&self, _x: &[f64], _p: &[f64], _lambda: &[f64]) -> Option<GnBlocks> {
        Some(GnBlocks::zeros(self.n_x(), self.n_p()))
    }
    fn solve_equilibrium(&self, p: &[f64], _guess: Option<&[f64]>) -> Result<Vec<f64>, SimError> {
        let mut rhs = self.b.clone();
        self.jp.mul_add_into(-1.0, p, &mut rhs);
        Ok(factor_sparse(&self.jx)?.solve(&rhs))
    }
    fn initial_parameters(&self) -> Vec<f64> {
        self.p0.clone()
    }
}

/// Adds `-mu sum_i [log(p_i - l_i) + log(u_i - p_i)]` to a problem's objective.
///
/// The barrier's curvature enters the Gauss-Newton `C` block through
/// [`EquilibriumProblem::extra_curvature`].
#[derive(Debug, Clone)]
pub struct LogBarrier<P> {
    pub inner: P,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mu: f64,
}

impl<P: EquilibriumProblem> LogBarrier<P> {
    pub fn new(inner: P, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            inner,
            lower,
            upper,
            mu: 1e-4,
        }
    }

    fn barrier_value(&self, p: &[f64]) -> f64 {
        let mut v = 0.0;
        for ((pi, l), u) in p.iter().zip(&self.lower).zip(&self.upper) {
            v -= self.mu * ((pi - l).ln() + (u - pi).ln());
        }
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn barrier_diag(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((pi, l), u)| self.mu * (1.0 / (pi - l).powi(2) + 1.0 / (u - pi).powi(2)))
            .collect()
    }
}

impl<P: EquilibriumProblem> EquilibriumProblem for LogBarrier<P> {
    fn n_x(&self) -> usize {
        self.inner.n_x()
    }
    fn n_p(&self) -> usize {
        self.inner.n_p()
    }
    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        self.inner.constraints(x, p)
    }
    fn constraint_jacobians(&self, x: &[f64], p: &[f64]) -> ConstraintJacobians {
        self.inner.constraint_jacobians(x, p)
    }
    fn objective(&self, x: &[f64], p: &[f64]) -> f64 {
        self.inner.objective(x, p) + self.barrier_value(p)
    }
    fn objective_gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (fx, mut fp) = self.inner.objective_gradient(x, p);
        for (((g, pi), l), u) in fp.iter_mut().zip(p).zip(&self.lower).zip(&self.upper) {
            *g += self.mu * (1.0 / (u - pi) - 1.0 / (pi - l));
        }
        (fx, fp)
    }
    fn residuals(&self, x: &[f64], p: &[f64]) -> Option<LeastSquares> {
        self.inner.residuals(x, p)
    }
    fn extra_curvature(&self, x: &[f64], p: &[f64]) -> Option<CscMatrix> {
        let d = CscMatrix::from_diagonal(&self.barrier_diag(p));
        match self.inner.extra_curvature(x, p) {
            Some(c) => c.add_scaled(1.0, &d).ok(),
            None => Some(d),
        }
    }
    fn objective_hessian(&self, x: &[f64], p: &[f64]) -> Option<GnBlocks> {
        let mut h = self.inner.objective_hessian(x, p)?;
        h.c = h.c.add_diagonal(&self.barrier_diag(p)).ok()?;
        Some(h)
    }
    fn constraint_curvature(&self, x: &[f64], p: &[f64], lambda: &[f64]) -> Option<GnBlocks> {
        self.inner.constraint_curvature(x, p, lambda)
    }
    fn solve_equilibrium(&self, p: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>, SimError> {
        self.inner.solve_equilibrium(p, guess)
    }
    fn initial_parameters(&self) -> Vec<f64> {
        self.inner.initial_parameters()
    }
}

/// Builds a sparse matrix from `(row, col, value)` entries; test and CLI helper.
pub fn csc(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> CscMatrix {
    TripletMatrix::from_entries(rows, cols, entries)
        .to_csc()
        .expect("entries in bounds")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_toy_equilibrium_is_feasible() {
        for p in [[0.2, 0.1], [-0.5, 0.8], [0.9, -0.1]] {
            let x = QuadraticToy.solve_equilibrium(&p, None).unwrap();
            let c = QuadraticToy.constraints(&x, &p);
            assert!(c.iter().all(|v| v.abs() < 1e-14), "{c:?}");
        }
    }

    #[test]
    fn linear_problem_solve() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, -1.0]]);
        let prob = LinearProblem::identity_map(&m, vec![1.0, 1.0, 1.0]);
        let x = prob.solve_equilibrium(&[1.0, 1.0], None).unwrap();
        assert_eq!(x, vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn barrier_is_infinite_outside() {
        let b = LogBarrier::new(ScalarCubic, vec![0.0], vec![2.0]);
        assert!(b.barrier_value(&[3.0]).is_infinite());
        assert!(b.barrier_value(&[1.0]).abs() < 1e-15);
    }
}
