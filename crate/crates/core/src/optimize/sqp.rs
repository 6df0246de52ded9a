use std::time::Instant;

use super::minimize::{IterationRecord, OptimizerRun, TerminationReason};
use super::{BoundMode, Method, OptimizerConfig, OptimizerError};
use crate::dense::{dot, norm1, norm2, norm_inf};
use crate::linsolve::{solve_kkt_stabilized, SolveError, SolveReport};
use crate::sensitivity::{
    adjoint_multipliers, kkt_newton_with_blocks, lagrangian_blocks, EquilibriumProblem,
};

/// One merit-globalized Newton step on the optimality conditions.
#[derive(Debug, Clone)]
pub struct SqpStep {
    pub dx: Vec<f64>,
    pub dp: Vec<f64>,
    pub dlambda: Vec<f64>,
    /// accepted step length
    pub alpha: f64,
    /// L1 penalty weight used by the merit function
    pub mu: f64,
    /// merit value after the step
    pub merit: f64,
    pub report: SolveReport,
}

fn merit<P: EquilibriumProblem + ?Sized>(prob: &P, x: &[f64], p: &[f64], mu: f64) -> f64 {
    prob.objective(x, p) + mu * norm1(&prob.constraints(x, p))
}

/// Solves the Newton system on the Lagrangian at `(x, p, lambda)` and
/// backtracks on `f + mu |c|_1` with `mu = max(mu_prev, 1.5 |lambda + dlambda|_inf)`.
///
/// If the step is not a descent direction of the merit function the
/// Hessian blocks are shifted by `tau I` as in the reduced-space methods.
pub fn sqp_step<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    lambda: &[f64],
    mu_prev: f64,
    cfg: &OptimizerConfig,
) -> Result<SqpStep, OptimizerError> {
    let (n_x, n_p) = (prob.n_x(), prob.n_p());
    let blocks = lagrangian_blocks(prob, x, p, lambda)?;
    let (fx, fp) = prob.objective_gradient(x, p);
    let c1 = norm1(&prob.constraints(x, p));
    let mut tau = 0.0;
    for _ in 0..=cfg.max_tau_increases + 1 {
        let shifted = if tau == 0.0 {
            blocks.clone()
        } else {
            blocks
                .regularized(tau)
                .map_err(crate::sensitivity::SensitivityError::from)?
        };
        let k = kkt_newton_with_blocks(prob, x, p, lambda, &shifted)?;
        let solved = solve_kkt_stabilized(&k, &k.rhs, &cfg.stabilization);
        let (z, report) = match solved {
            Ok(out) => out,
            Err(SolveError::SingularMatrix { .. } | SolveError::NoConvergence { .. }) => {
                tau = if tau == 0.0 { cfg.tau0 } else { tau * 10.0 };
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let (dx, dp, dl) = (&z[..n_x], &z[n_x..n_x + n_p], &z[n_x + n_p..]);
        let new_lambda: Vec<f64> = lambda.iter().zip(dl).map(|(a, b)| a + b).collect();
        let mu = mu_prev.max(1.5 * norm_inf(&new_lambda));
        let phi0 = prob.objective(x, p) + mu * c1;
        let slope = dot(&fx, dx) + dot(&fp, dp) - mu * c1;
        if norm2(&z) == 0.0 {
            return Ok(SqpStep {
                dx: dx.to_vec(),
                dp: dp.to_vec(),
                dlambda: dl.to_vec(),
                alpha: 1.0,
                mu,
                merit: phi0,
                report,
            });
        }
        if slope >= 0.0 {
            tau = if tau == 0.0 { cfg.tau0 } else { tau * 10.0 };
            continue;
        }
        let mut alpha = 1.0;
        for _ in 0..=cfg.max_backtracks {
            let xt: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
            let pt: Vec<f64> = p.iter().zip(dp).map(|(a, b)| a + alpha * b).collect();
            let phi = merit(prob, &xt, &pt, mu);
            if phi.is_finite() && phi <= phi0 + cfg.c1 * alpha * slope {
                return Ok(SqpStep {
                    dx: dx.to_vec(),
                    dp: dp.to_vec(),
                    dlambda: dl.to_vec(),
                    alpha,
                    mu,
                    merit: phi,
                    report,
                });
            }
            alpha *= cfg.backtrack;
        }
        return Err(OptimizerError::MeritLineSearchFailure {
            backtracks: cfg.max_backtracks,
        });
    }
    Err(OptimizerError::MeritLineSearchFailure { backtracks: 0 })
}

/// Norm of `(grad_x L, grad_p L, c)`.
fn kkt_residual<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    lambda: &[f64],
) -> f64 {
    let jac = prob.constraint_jacobians(x, p);
    let (mut lx, mut lp) = prob.objective_gradient(x, p);
    jac.dcdx.mul_transpose_add_into(1.0, lambda, &mut lx);
    jac.dcdp.mul_transpose_add_into(1.0, lambda, &mut lp);
    let c = prob.constraints(x, p);
    (dot(&lx, &lx) + dot(&lp, &lp) + dot(&c, &c)).sqrt()
}

/// SQP from the equilibrium at `p0` with adjoint multipliers. Records hold
/// `f(x, p)` at the (generally infeasible) iterates and the KKT residual
/// norm in the gradient column; the merit function, not `f`, decreases.
pub(crate) fn minimize_sqp<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    p0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptimizerRun, OptimizerError> {
    if cfg.bound_mode == BoundMode::ProjectedDirection && prob.bounds().is_some() {
        return Err(OptimizerError::NotApplicable {
            method: Method::Sqp,
            reason: "parameter bounds are not supported; use a log barrier or disable bounds"
                .into(),
        });
    }
    let start = Instant::now();
    let mut p = p0.to_vec();
    let t = Instant::now();
    let mut x = prob.solve_equilibrium(&p, None)?;
    let fwd_time_s = t.elapsed().as_secs_f64();
    let mut lambda = adjoint_multipliers(prob, &x, &p)?;
    let mut mu = 0.0;
    let mut records = vec![IterationRecord {
        iter: 0,
        f: prob.objective(&x, &p),
        grad_norm: kkt_residual(prob, &x, &p, &lambda),
        fwd_time_s,
        elapsed_s: start.elapsed().as_secs_f64(),
        ..Default::default()
    }];
    let mut iterates = vec![p.clone()];
    let termination = loop {
        let last = records.last().expect("initial record");
        if last.grad_norm <= cfg.grad_tol {
            break TerminationReason::Converged;
        }
        if last.iter >= cfg.max_iters {
            break TerminationReason::MaxIterations;
        }
        let td = Instant::now();
        let step = match sqp_step(prob, &x, &p, &lambda, mu, cfg) {
            Ok(s) => s,
            Err(OptimizerError::MeritLineSearchFailure { .. }) => {
                break TerminationReason::LineSearchFailure
            }
            Err(e) => return Err(e),
        };
        let dir_time_s = td.elapsed().as_secs_f64();
        let a = step.alpha;
        x.iter_mut().zip(&step.dx).for_each(|(v, d)| *v += a * d);
        p.iter_mut().zip(&step.dp).for_each(|(v, d)| *v += a * d);
        lambda
            .iter_mut()
            .zip(&step.dlambda)
            .for_each(|(v, d)| *v += a * d);
        mu = step.mu;
        iterates.push(p.clone());
        records.push(IterationRecord {
            iter: last.iter + 1,
            f: prob.objective(&x, &p),
            grad_norm: kkt_residual(prob, &x, &p, &lambda),
            step_len: a,
            dir_time_s,
            fwd_time_s: 0.0,
            elapsed_s: start.elapsed().as_secs_f64(),
            lin_rel_residual: step.report.relative_residual,
            lin_iters: step.report.iterations,
        });
    };
    Ok(OptimizerRun {
        method: Method::Sqp,
        records,
        termination,
        p,
        x,
        descent_fallbacks: 0,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::optimize::direction_sparse_newton;
    use crate::problems::{LinearProblem, QuadraticToy, ScalarCubic};

    #[test]
    fn zero_step_at_kkt_point() {
        // p = 8 gives x = 2, the unconstrained minimizer of f
        let (x, p) = ([2.0], [8.0]);
        let lambda = adjoint_multipliers(&ScalarCubic, &x, &p).unwrap();
        let s = sqp_step(
            &ScalarCubic,
            &x,
            &p,
            &lambda,
            0.0,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(s
            .dx
            .iter()
            .chain(&s.dp)
            .chain(&s.dlambda)
            .all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn matches_reduced_newton_at_feasible_point() {
        let p = [0.5, 0.3];
        let x = QuadraticToy.solve_equilibrium(&p, None).unwrap();
        let lambda = adjoint_multipliers(&QuadraticToy, &x, &p).unwrap();
        let cfg = OptimizerConfig::default();
        let s = sqp_step(&QuadraticToy, &x, &p, &lambda, 0.0, &cfg).unwrap();
        let d = direction_sparse_newton(&QuadraticToy, &x, &p, &cfg).unwrap();
        for i in 0..2 {
            assert!((s.dp[i] - d.dp[i]).abs() <= 1e-10 * (1.0 + d.dp[i].abs()));
        }
    }

    #[test]
    fn linear_constraints_restored_in_one_full_step() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 1.0]]);
        let prob = LinearProblem::identity_map(&m, vec![1.0, 2.0]);
        let (x, p) = (vec![0.3, -0.4], vec![0.0, 0.0]);
        let c_before = norm1(&prob.constraints(&x, &p));
        let s = sqp_step(&prob, &x, &p, &[0.0, 0.0], 0.0, &OptimizerConfig::default()).unwrap();
        assert_eq!(s.alpha, 1.0);
        let xn: Vec<f64> = x.iter().zip(&s.dx).map(|(a, b)| a + b).collect();
        let pn: Vec<f64> = p.iter().zip(&s.dp).map(|(a, b)| a + b).collect();
        let c_after = norm1(&prob.constraints(&xn, &pn));
        assert!(c_after < c_before && c_after < 1e-12);
    }

    #[test]
    fn sqp_converges_on_toy() {
        let cfg = OptimizerConfig::with_method(Method::Sqp);
        let run = crate::optimize::minimize(&QuadraticToy, &[0.2, 0.1], &cfg).unwrap();
        assert_eq!(run.termination, TerminationReason::Converged);
        let c = QuadraticToy.constraints(&run.x, &run.p);
        assert!(norm2(&c) <= 1e-5);
    }
}
