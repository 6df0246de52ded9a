//! Krylov iterations: preconditioned BiCGSTAB for KKT refinement and
//! conjugate gradients for the matrix-free reduced Gauss-Newton operator.

use std::time::Instant;

use super::{LdltFactorization, SolveError, SolveReport, SparseFactorization};
use crate::dense::{axpy, dot, norm2};
use crate::sparse::CscMatrix;

/// Default CG relative residual threshold.
pub const DEFAULT_CG_ETA: f64 = 1e-3;

/// Approximate inverse applied by preconditioned iterations.
pub trait Preconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

impl Preconditioner for SparseFactorization {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.solve(r)
    }
}

impl Preconditioner for LdltFactorization {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.solve(r)
    }
}

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub struct BicgstabOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn true_residual(a: &CscMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    a.mul_add_into(-1.0, x, &mut r);
    r
}

/// Preconditioned BiCGSTAB on `A x = b` starting from `x0`, with the
/// preconditioner applied through `precond.apply`. Convergence is judged on
/// the true residual `‖b - A x‖ / ‖b‖`.
pub fn bicgstab(
    a: &CscMatrix,
    precond: &dyn Preconditioner,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> BicgstabOutcome {
    let bnorm = norm2(b);
    let mut x = x0;
    if bnorm == 0.0 {
        return BicgstabOutcome {
            x: vec![0.0; b.len()],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = true_residual(a, &x, b);
    let mut rel = norm2(&r) / bnorm;
    let mut best = (rel, x.clone());
    if rel <= tol {
        return BicgstabOutcome {
            x,
            iterations: 0,
            relative_residual: rel,
            converged: true,
        };
    }

    let n = b.len();
    let mut r_hat = r.clone();
    let (mut rho_prev, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut v_work = vec![0.0; n];

    for it in 1..=max_iter {
        let rho = dot(&r_hat, &r);
        if rho == 0.0 || !rho.is_finite() {
            // breakdown: restart from the current residual
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho / rho_prev) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond.apply(&p);
        v_work.iter_mut().for_each(|e| *e = 0.0);
        a.mul_add_into(1.0, &p_hat, &mut v_work);
        std::mem::swap(&mut v, &mut v_work);
        alpha = rho / dot(&r_hat, &v);
        let mut s = r.clone();
        axpy(-alpha, &v, &mut s);
        axpy(alpha, &p_hat, &mut x);

        let s_rel = norm2(&s) / bnorm;
        if s_rel <= tol {
            r = true_residual(a, &x, b);
            rel = norm2(&r) / bnorm;
            if rel < best.0 {
                best = (rel, x.clone());
            }
            if rel <= tol {
                return BicgstabOutcome {
                    x,
                    iterations: it,
                    relative_residual: rel,
                    converged: true,
                };
            }
            r_hat.copy_from_slice(&r);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }

        let s_hat = precond.apply(&s);
        let mut t = vec![0.0; n];
        a.mul_add_into(1.0, &s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        axpy(omega, &s_hat, &mut x);
        r = s;
        axpy(-omega, &t, &mut r);
        rho_prev = rho;

        let r_true = true_residual(a, &x, b);
        rel = norm2(&r_true) / bnorm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= tol {
            return BicgstabOutcome {
                x,
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        if omega == 0.0 {
            r = r_true;
            r_hat.copy_from_slice(&r);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
        }
    }
    BicgstabOutcome {
        x: best.1,
        iterations: max_iter,
        relative_residual: best.0,
        converged: false,
    }
}

/// The reduced Gauss-Newton operator
/// `H y = S^T A S y + B S y + S^T B^T y + C y` with `S = -(dc/dx)^{-1} dc/dp`,
/// applied with one solve and one transposed solve per product.
pub struct ReducedGnOperator<'a> {
    pub dcdx: &'a SparseFactorization,
    pub dcdp: &'a CscMatrix,
    pub a: &'a CscMatrix,
    pub b: &'a CscMatrix,
    pub c: &'a CscMatrix,
}

impl LinearOperator for ReducedGnOperator<'_> {
    fn dim(&self) -> usize {
        self.dcdp.cols()
    }

    fn apply(&self, y: &[f64]) -> Vec<f64> {
        let nx = self.dcdp.rows();
        // t = S y
        let mut w = vec![0.0; nx];
        self.dcdp.mul_add_into(-1.0, y, &mut w);
        let t = self.dcdx.solve(&w);
        // u = A t + B^T y
        let mut u = vec![0.0; nx];
        self.a.mul_add_into(1.0, &t, &mut u);
        self.b.mul_transpose_add_into(1.0, y, &mut u);
        // H y = S^T u + B t + C y,  S^T u = -dcdp^T dcdx^{-T} u
        let z = self.dcdx.solve_transpose(&u);
        let mut out = vec![0.0; y.len()];
        self.dcdp.mul_transpose_add_into(-1.0, &z, &mut out);
        self.b.mul_add_into(1.0, &t, &mut out);
        self.c.mul_add_into(1.0, y, &mut out);
        out
    }
}

/// Conjugate gradients from a zero start until `‖H x - rhs‖ ≤ eta ‖rhs‖`.
///
/// The returned report carries the a-posteriori residual (one extra operator
/// application). `max_iter` defaults to `10 * dim`.
pub fn cg_reduced(
    op: &dyn LinearOperator,
    rhs: &[f64],
    eta: f64,
    max_iter: Option<usize>,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let start = Instant::now();
    let n = op.dim();
    assert_eq!(rhs.len(), n, "rhs dimension");
    let max_iter = max_iter.unwrap_or(10 * n.max(1));
    let bnorm = norm2(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveReport::default()));
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= eta * bnorm {
            break;
        }
        let hp = op.apply(&p);
        let curvature = dot(&p, &hp);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(SolveError::NegativeCurvature {
                iteration: iterations,
                curvature,
                last_iterate: x,
            });
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &hp, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
        iterations += 1;
    }
    let hx = op.apply(&x);
    let res: Vec<f64> = rhs.iter().zip(&hx).map(|(b, h)| b - h).collect();
    let rel = norm2(&res) / bnorm;
    if rr.sqrt() > eta * bnorm {
        return Err(SolveError::NoConvergence {
            iterations,
            best_residual: rel,
        });
    }
    Ok((
        x,
        SolveReport {
            relative_residual: rel,
            iterations,
            factor_time_s: 0.0,
            solve_time_s: start.elapsed().as_secs_f64(),
            fill_nnz: 0,
        },
    ))
}
