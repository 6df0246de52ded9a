use std::time::Instant;

use super::lbfgs::{two_loop, LbfgsHistory};
use super::{Method, OptimizerConfig, OptimizerError};
use crate::dense::{dot, norm2, scaled};
use crate::linsolve::{
    cg_reduced, cholesky_dense, solve_kkt_stabilized, ReducedGnOperator, SolveError, SolveReport,
};
use crate::sensitivity::{
    adjoint_gradient, adjoint_multipliers, adjoint_solve, assemble_sgn, dense_gn_hessian_from,
    factor_constraint_jacobian, ggn_blocks, gn_blocks, lagrangian_blocks, sensitivity_matrix_with,
    solve_block_gn, EquilibriumProblem, GnBlocks, KktSystem,
};

type Result<T> = std::result::Result<T, OptimizerError>;

/// Wall-clock breakdown of one direction computation, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DirectionTimings {
    pub assemble_s: f64,
    pub factor_s: f64,
    pub solve_s: f64,
    /// dense path only: factorization of `dc/dx` plus `n_p` back-substitutions
    pub sens_matrix_s: f64,
    /// dense path only: Cholesky of the reduced Hessian
    pub dense_factor_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone)]
pub struct SearchDirection {
    pub dp: Vec<f64>,
    pub dx: Option<Vec<f64>>,
    pub dlambda: Option<Vec<f64>>,
    /// `df/dp` at the point the direction was computed for
    pub grad: Vec<f64>,
    pub timings: DirectionTimings,
    pub report: SolveReport,
    /// diagonal shift that made the direction a descent direction (0 if none)
    pub regularization: f64,
}

impl SearchDirection {
    fn first_order(dp: Vec<f64>, grad: Vec<f64>, total_s: f64) -> Self {
        Self {
            dp,
            dx: None,
            dlambda: None,
            grad,
            timings: DirectionTimings {
                total_s,
                ..Default::default()
            },
            report: SolveReport::default(),
            regularization: 0.0,
        }
    }

    /// `df/dp . dp`
    pub fn slope(&self) -> f64 {
        dot(&self.grad, &self.dp)
    }
}

/// `(dx, dp, dlambda, report)`
type KktSplit = (Vec<f64>, Vec<f64>, Vec<f64>, SolveReport);

fn kkt_direction(k: &KktSystem, cfg: &OptimizerConfig) -> Result<KktSplit> {
    let (z, report) = solve_kkt_stabilized(k, &k.rhs, &cfg.stabilization)?;
    let (dx, dp, dl) = k.split_solution(&z);
    Ok((dx.to_vec(), dp.to_vec(), dl.to_vec(), report))
}

fn gradient_from_rhs(k: &KktSystem) -> Vec<f64> {
    k.rhs[k.n_x..k.n_x + k.n_p].iter().map(|v| -v).collect()
}

/// Gauss-Newton step from the sparse saddle-point system.
pub fn direction_sgn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let blocks = gn_blocks(prob, x, p)?;
    let k = assemble_sgn(prob, x, p, &blocks)?;
    let assemble_s = t0.elapsed().as_secs_f64();
    let (dx, dp, dl, report) = kkt_direction(&k, cfg)?;
    Ok(SearchDirection {
        dp,
        dx: Some(dx),
        dlambda: Some(dl),
        grad: gradient_from_rhs(&k),
        timings: DirectionTimings {
            assemble_s,
            factor_s: report.factor_time_s,
            solve_s: report.solve_time_s,
            total_s: t0.elapsed().as_secs_f64(),
            ..Default::default()
        },
        report,
        regularization: 0.0,
    })
}

/// Gauss-Newton step from the dense reduced Hessian `S^T A S + B S + S^T B^T + C`.
pub fn direction_dgn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    _cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let jac = prob.constraint_jacobians(x, p);
    let factor = factor_constraint_jacobian(&jac.dcdx)?;
    let s = sensitivity_matrix_with(&factor, &jac.dcdp);
    let sens_matrix_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let (fx, fp) = prob.objective_gradient(x, p);
    let (g, _) = adjoint_solve(&factor, &jac.dcdp, &fx, &fp);
    let blocks = gn_blocks(prob, x, p)?;
    let h = dense_gn_hessian_from(&s, &blocks)?;
    let assemble_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let chol = cholesky_dense(&h)?;
    let dense_factor_s = t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    let dp = chol.solve(&scaled(-1.0, &g));
    let solve_s = t3.elapsed().as_secs_f64();

    let hd = h.matvec(&dp);
    let gnorm = norm2(&g);
    let rel = if gnorm == 0.0 {
        0.0
    } else {
        norm2(&hd.iter().zip(&g).map(|(a, b)| a + b).collect::<Vec<_>>()) / gnorm
    };
    Ok(SearchDirection {
        dp,
        dx: None,
        dlambda: None,
        grad: g,
        timings: DirectionTimings {
            assemble_s,
            factor_s: dense_factor_s,
            solve_s,
            sens_matrix_s,
            dense_factor_s,
            total_s: t0.elapsed().as_secs_f64(),
        },
        report: SolveReport {
            relative_residual: rel,
            iterations: 0,
            factor_time_s: dense_factor_s,
            solve_time_s: solve_s,
            fill_nnz: 0,
        },
        regularization: 0.0,
    })
}

/// Block substitution for objectives without direct parameter dependence and
/// a square `dc/dp`.
pub fn direction_bgn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    _cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let not_applicable = |reason: &str| OptimizerError::NotApplicable {
        method: Method::Bgn,
        reason: reason.to_string(),
    };
    let (_, fp) = prob.objective_gradient(x, p);
    if fp.iter().any(|&v| v != 0.0) {
        return Err(not_applicable("objective depends directly on p"));
    }
    let blocks = gn_blocks(prob, x, p)?;
    if blocks.b.max_abs() != 0.0 || blocks.c.max_abs() != 0.0 {
        return Err(not_applicable("Gauss-Newton blocks B and C must vanish"));
    }
    let g = adjoint_gradient(prob, x, p)?;
    let assemble_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let dp = solve_block_gn(prob, x, p, &blocks.a)?;
    let solve_s = t1.elapsed().as_secs_f64();
    let mut dir = SearchDirection::first_order(dp, g, t0.elapsed().as_secs_f64());
    dir.timings.assemble_s = assemble_s;
    dir.timings.solve_s = solve_s;
    Ok(dir)
}

/// Conjugate gradients on the reduced Gauss-Newton operator, never forming it.
///
/// On negative curvature the last CG iterate is returned (steepest descent if
/// that is still zero).
pub fn direction_cg_gn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let jac = prob.constraint_jacobians(x, p);
    let factor = factor_constraint_jacobian(&jac.dcdx)?;
    let factor_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (fx, fp) = prob.objective_gradient(x, p);
    let (g, _) = adjoint_solve(&factor, &jac.dcdp, &fx, &fp);
    let blocks = gn_blocks(prob, x, p)?;
    let assemble_s = t1.elapsed().as_secs_f64();
    let op = ReducedGnOperator {
        dcdx: &factor,
        dcdp: &jac.dcdp,
        a: &blocks.a,
        b: &blocks.b,
        c: &blocks.c,
    };
    let t2 = Instant::now();
    let rhs = scaled(-1.0, &g);
    let (dp, mut report) = match cg_reduced(&op, &rhs, cfg.cg_eta, None) {
        Ok(out) => out,
        Err(SolveError::NegativeCurvature { last_iterate, .. }) => {
            let dp = if last_iterate.iter().all(|&v| v == 0.0) {
                rhs.clone()
            } else {
                last_iterate
            };
            (dp, SolveReport::default())
        }
        Err(e) => return Err(e.into()),
    };
    let solve_s = t2.elapsed().as_secs_f64();
    report.factor_time_s = factor_s;
    report.fill_nnz = factor.fill_nnz();
    Ok(SearchDirection {
        dp,
        dx: None,
        dlambda: None,
        grad: g,
        timings: DirectionTimings {
            assemble_s,
            factor_s,
            solve_s,
            total_s: t0.elapsed().as_secs_f64(),
            ..Default::default()
        },
        report,
        regularization: 0.0,
    })
}

/// `-df/dp`.
pub fn direction_gd<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    _cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let g = adjoint_gradient(prob, x, p)?;
    Ok(SearchDirection::first_order(
        scaled(-1.0, &g),
        g,
        t0.elapsed().as_secs_f64(),
    ))
}

/// L-BFGS with the scaled-identity initial inverse Hessian `gamma I`.
pub fn direction_lbfgs<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    history: &LbfgsHistory,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let g = adjoint_gradient(prob, x, p)?;
    let gamma = history.gamma();
    let dp = two_loop::<OptimizerError>(history, &g, |q| Ok(scaled(gamma, q)))?;
    Ok(SearchDirection::first_order(
        dp,
        g,
        t0.elapsed().as_secs_f64(),
    ))
}

/// L-BFGS whose initial inverse Hessian is applied by solving the sparse
/// Gauss-Newton system with right-hand side `(0, -q, 0)`.
pub fn direction_lbfgs_sgn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    history: &LbfgsHistory,
    cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let blocks = gn_blocks(prob, x, p)?;
    let mut k = assemble_sgn(prob, x, p, &blocks)?;
    let g = gradient_from_rhs(&k);
    let assemble_s = t0.elapsed().as_secs_f64();
    let mut report = SolveReport::default();
    let dp = two_loop::<OptimizerError>(history, &g, |q| {
        for (r, qi) in k.rhs[k.n_x..k.n_x + k.n_p].iter_mut().zip(q) {
            *r = -qi;
        }
        let (_, dp, _, rep) = kkt_direction(&k, cfg)?;
        report = rep;
        Ok(scaled(-1.0, &dp))
    })?;
    Ok(SearchDirection {
        dp,
        dx: None,
        dlambda: None,
        grad: g,
        timings: DirectionTimings {
            assemble_s,
            factor_s: report.factor_time_s,
            solve_s: report.solve_time_s,
            total_s: t0.elapsed().as_secs_f64(),
            ..Default::default()
        },
        report,
        regularization: 0.0,
    })
}

/// Saddle-point solve with possibly indefinite blocks: shifts `A`, `C` by
/// `tau I` (0, then `tau0`, growing 10x) until the step is a descent
/// direction, falling back to `-g`.
fn regularized_direction<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    blocks: GnBlocks,
    cfg: &OptimizerConfig,
    t0: Instant,
) -> Result<SearchDirection> {
    let jac = prob.constraint_jacobians(x, p);
    let g = adjoint_gradient(prob, x, p)?;
    let mut assemble_s = t0.elapsed().as_secs_f64();
    let mut timings = DirectionTimings::default();
    let gnorm = norm2(&g);
    let mut tau = 0.0;
    for _ in 0..=cfg.max_tau_increases + 1 {
        let ta = Instant::now();
        let shifted = if tau == 0.0 {
            blocks.clone()
        } else {
            blocks
                .regularized(tau)
                .map_err(crate::sensitivity::SensitivityError::from)?
        };
        let k = KktSystem::gauss_newton(&shifted, &jac, &g)?;
        assemble_s += ta.elapsed().as_secs_f64();
        match kkt_direction(&k, cfg) {
            Ok((dx, dp, dl, report)) => {
                timings.factor_s += report.factor_time_s;
                timings.solve_s += report.solve_time_s;
                if gnorm == 0.0 || dot(&g, &dp) < 0.0 {
                    timings.assemble_s = assemble_s;
                    timings.total_s = t0.elapsed().as_secs_f64();
                    return Ok(SearchDirection {
                        dp,
                        dx: Some(dx),
                        dlambda: Some(dl),
                        grad: g,
                        timings,
                        report,
                        regularization: tau,
                    });
                }
            }
            Err(OptimizerError::Solve(
                SolveError::SingularMatrix { .. } | SolveError::NoConvergence { .. },
            )) => {}
            Err(e) => return Err(e),
        }
        tau = if tau == 0.0 { cfg.tau0 } else { tau * 10.0 };
    }
    let mut dir = SearchDirection::first_order(scaled(-1.0, &g), g, t0.elapsed().as_secs_f64());
    dir.regularization = f64::INFINITY;
    Ok(dir)
}

/// Generalized Gauss-Newton: objective second derivatives, no sensitivity curvature.
pub fn direction_sparse_ggn<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let blocks = ggn_blocks(prob, x, p)?;
    regularized_direction(prob, x, p, blocks, cfg, t0)
}

/// Full reduced Newton: Lagrangian blocks at the adjoint multipliers.
pub fn direction_sparse_newton<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    cfg: &OptimizerConfig,
) -> Result<SearchDirection> {
    let t0 = Instant::now();
    let lambda = adjoint_multipliers(prob, x, p)?;
    let blocks = lagrangian_blocks(prob, x, p, &lambda)?;
    regularized_direction(prob, x, p, blocks, cfg, t0)
}

/// Dispatches on `cfg.method`; SQP has no reduced-space direction.
pub fn compute_direction<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    cfg: &OptimizerConfig,
    history: &LbfgsHistory,
) -> Result<SearchDirection> {
    match cfg.method {
        Method::Sgn => direction_sgn(prob, x, p, cfg),
        Method::Dgn => direction_dgn(prob, x, p, cfg),
        Method::Bgn => direction_bgn(prob, x, p, cfg),
        Method::CgGn => direction_cg_gn(prob, x, p, cfg),
        Method::Gd => direction_gd(prob, x, p, cfg),
        Method::Lbfgs => direction_lbfgs(prob, x, p, history),
        Method::LbfgsSgn => direction_lbfgs_sgn(prob, x, p, history, cfg),
        Method::SparseGgn => direction_sparse_ggn(prob, x, p, cfg),
        Method::SparseNewton => direction_sparse_newton(prob, x, p, cfg),
        Method::Sqp => Err(OptimizerError::NotApplicable {
            method: Method::Sqp,
            reason: "SQP updates (x, p, lambda) jointly; use sqp_step".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::problems::{LinearProblem, QuadraticToy, ScalarCubic};

    fn linear() -> LinearProblem {
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 2.0], vec![1.0, -1.0]]);
        LinearProblem::identity_map(&m, vec![1.0, -1.0, 0.5])
    }

    #[test]
    fn zero_gradient_gives_zero_direction() {
        // x* reachable: p = (1, 1) maps to (1.5, 2, 0)
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 2.0], vec![1.0, -1.0]]);
        let prob = LinearProblem::identity_map(&m, vec![1.5, 2.0, 0.0]);
        let p = [1.0, 1.0];
        let x = prob.solve_equilibrium(&p, None).unwrap();
        let cfg = OptimizerConfig::default();
        let hist = LbfgsHistory::new(3);
        for method in Method::ALL {
            if matches!(method, Method::Sqp | Method::Bgn) {
                continue;
            }
            let cfg = OptimizerConfig {
                method,
                ..cfg.clone()
            };
            let d = compute_direction(&prob, &x, &p, &cfg, &hist).unwrap();
            assert!(d.dp.iter().all(|v| v.abs() < 1e-14), "{method}: {:?}", d.dp);
        }
    }

    #[test]
    fn gauss_newton_directions_agree_and_descend() {
        let prob = linear();
        let p = [0.3, -0.2];
        let x = prob.solve_equilibrium(&p, None).unwrap();
        let cfg = OptimizerConfig {
            cg_eta: 1e-12,
            ..Default::default()
        };
        let sgn = direction_sgn(&prob, &x, &p, &cfg).unwrap();
        let dgn = direction_dgn(&prob, &x, &p, &cfg).unwrap();
        let cg = direction_cg_gn(&prob, &x, &p, &cfg).unwrap();
        assert!(sgn.slope() < 0.0);
        for i in 0..2 {
            assert!((sgn.dp[i] - dgn.dp[i]).abs() < 1e-9);
            assert!((cg.dp[i] - dgn.dp[i]).abs() < 1e-9);
        }
        let t = dgn.timings;
        assert!(t.sens_matrix_s + t.dense_factor_s <= t.total_s);
    }

    #[test]
    fn hybrid_lbfgs_with_empty_history_is_sgn() {
        let prob = linear();
        let p = [0.4, 0.2];
        let x = prob.solve_equilibrium(&p, None).unwrap();
        let cfg = OptimizerConfig::default();
        let sgn = direction_sgn(&prob, &x, &p, &cfg).unwrap();
        let hybrid = direction_lbfgs_sgn(&prob, &x, &p, &LbfgsHistory::new(5), &cfg).unwrap();
        assert_eq!(sgn.dp, hybrid.dp);
    }

    #[test]
    fn bgn_rejects_direct_parameter_dependence() {
        let prob = QuadraticToy;
        let p = [0.4, 0.2];
        let x = prob.solve_equilibrium(&p, None).unwrap();
        let err = direction_bgn(&prob, &x, &p, &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err, OptimizerError::NotApplicable { .. }));
    }

    #[test]
    fn newton_on_scalar_cubic() {
        // reduced objective F(p) = (p^{1/3} - 2)^2 / 2
        let prob = ScalarCubic;
        let p = [1.0];
        let x = prob.solve_equilibrium(&p, None).unwrap();
        let d = direction_sparse_newton(&prob, &x, &p, &OptimizerConfig::default()).unwrap();
        let f = |p: f64| 0.5 * (p.cbrt() - 2.0).powi(2);
        let h = 1e-4;
        let g = (f(1.0 + h) - f(1.0 - h)) / (2.0 * h);
        let hess = (f(1.0 + h) - 2.0 * f(1.0) + f(1.0 - h)) / (h * h);
        assert_eq!(d.regularization, 0.0);
        assert!(
            (d.dp[0] + g / hess).abs() < 1e-5 * (g / hess).abs(),
            "{} vs {}",
            d.dp[0],
            -g / hess
        );
    }
}
