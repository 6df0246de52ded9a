use std::time::Instant;

use super::bounds::{clamp_to_bounds, project_direction_bounds};
use super::direction::{compute_direction, SearchDirection};
use super::lbfgs::LbfgsHistory;
use super::sqp::minimize_sqp;
use super::{BoundMode, Method, OptimizerConfig, OptimizerError};
use crate::dense::{dot, norm2, scaled, sub};
use crate::sensitivity::{adjoint_gradient, EquilibriumProblem};

/// State after an iteration; row 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// accepted line-search step length (0 on row 0)
    pub step_len: f64,
    pub dir_time_s: f64,
    /// forward solves spent in this iteration's line search
    pub fwd_time_s: f64,
    pub elapsed_s: f64,
    pub lin_rel_residual: f64,
    pub lin_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    Converged,
    MaxIterations,
    LineSearchFailure,
    /// projected steepest descent vanishes at active bounds
    BoundStationary,
}

impl TerminationReason {
    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::Converged => "converged",
            TerminationReason::MaxIterations => "max_iterations",
            TerminationReason::LineSearchFailure => "line_search_failure",
            TerminationReason::BoundStationary => "bound_stationary",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerRun {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub termination: TerminationReason,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    /// iterations where the method's direction was replaced by steepest descent
    pub descent_fallbacks: usize,
    /// every accepted parameter vector, starting with `p0`
    pub iterates: Vec<Vec<f64>>,
}

impl OptimizerRun {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("at least the initial record")
    }

    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }
}

fn active_bounds<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    cfg: &OptimizerConfig,
) -> Option<(Vec<f64>, Vec<f64>)> {
    match cfg.bound_mode {
        BoundMode::ProjectedDirection => prob.bounds(),
        BoundMode::None | BoundMode::LogBarrierInProblem => None,
    }
}

/// Minimizes `f(x(p), p)` from `p0`, re-solving the equilibrium at every
/// trial point of a monotone backtracking line search.
pub fn minimize<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    p0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptimizerRun, OptimizerError> {
    cfg.validate()?;
    if cfg.method == Method::Sqp {
        return minimize_sqp(prob, p0, cfg);
    }
    let start = Instant::now();
    let bounds = active_bounds(prob, cfg);
    let mut p = p0.to_vec();
    if let Some((lo, hi)) = &bounds {
        project_direction_bounds(&vec![0.0; p.len()], &p, lo, hi)?;
    }
    let t = Instant::now();
    let mut x = prob.solve_equilibrium(&p, None)?;
    let mut fwd_time_s = t.elapsed().as_secs_f64();
    let mut f = prob.objective(&x, &p);
    let mut history = LbfgsHistory::new(cfg.lbfgs_history.max(1));
    let mut records = Vec::new();
    let mut iterates = vec![p.clone()];
    let mut descent_fallbacks = 0;
    let mut alpha_prev: f64 = 1.0;
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None; // (s, g) of the previous step
    let mut pending = IterationRecord::default();

    let termination = loop {
        let iter = records.len();
        let g = adjoint_gradient(prob, &x, &p)?;
        if let Some((s, g_old)) = last.take() {
            history.push(s, sub(&g, &g_old));
        }
        let grad_norm = norm2(&g);
        records.push(IterationRecord {
            iter,
            f,
            grad_norm,
            fwd_time_s,
            elapsed_s: start.elapsed().as_secs_f64(),
            ..pending
        });
        if grad_norm <= cfg.grad_tol {
            break TerminationReason::Converged;
        }
        if iter >= cfg.max_iters {
            break TerminationReason::MaxIterations;
        }

        let td = Instant::now();
        let mut dir: SearchDirection = compute_direction(prob, &x, &p, cfg, &history)?;
        let dir_time_s = td.elapsed().as_secs_f64();
        if let Some((lo, hi)) = &bounds {
            dir.dp = project_direction_bounds(&dir.dp, &p, lo, hi)?;
        }
        if !(dot(&g, &dir.dp) < 0.0) {
            descent_fallbacks += 1;
            dir.dp = scaled(-1.0, &g);
            if let Some((lo, hi)) = &bounds {
                dir.dp = project_direction_bounds(&dir.dp, &p, lo, hi)?;
            }
            if dir.dp.iter().all(|&v| v == 0.0) {
                break TerminationReason::BoundStationary;
            }
        }
        let slope = dot(&g, &dir.dp);

        // first-order methods carry their step scale across iterations
        let scale_free =
            matches!(cfg.method, Method::Gd) || (cfg.method == Method::Lbfgs && history.is_empty());
        let mut alpha = if scale_free {
            (2.0 * alpha_prev).max(1e-12)
        } else {
            1.0
        };
        let mut accepted = None;
        fwd_time_s = 0.0;
        for _ in 0..=cfg.max_backtracks {
            let mut trial: Vec<f64> = p.iter().zip(&dir.dp).map(|(a, b)| a + alpha * b).collect();
            if let Some((lo, hi)) = &bounds {
                clamp_to_bounds(&mut trial, lo, hi);
            }
            let t = Instant::now();
            let solved = prob.solve_equilibrium(&trial, Some(&x));
            fwd_time_s += t.elapsed().as_secs_f64();
            if let Ok(x_trial) = solved {
                let f_trial = prob.objective(&x_trial, &trial);
                if f_trial.is_finite() && f_trial < f && f_trial <= f + cfg.c1 * alpha * slope {
                    accepted = Some((trial, x_trial, f_trial));
                    break;
                }
            }
            alpha *= cfg.backtrack;
        }
        let Some((p_new, x_new, f_new)) = accepted else {
            break TerminationReason::LineSearchFailure;
        };
        last = Some((sub(&p_new, &p), g));
        alpha_prev = alpha;
        p = p_new;
        x = x_new;
        f = f_new;
        iterates.push(p.clone());
        pending = IterationRecord {
            step_len: alpha,
            dir_time_s,
            lin_rel_residual: dir.report.relative_residual,
            lin_iters: dir.report.iterations,
            ..Default::default()
        };
    };

    Ok(OptimizerRun {
        method: cfg.method,
        records,
        termination,
        p,
        x,
        descent_fallbacks,
        iterates,
    })
}
