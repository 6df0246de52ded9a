//! `scaling`: median direction time per (size, method) cell.

use std::path::Path;

use serde::Serialize;
use sgn_core::optimize::{compute_direction, LbfgsHistory, Method, OptimizerConfig};
use sgn_core::EquilibriumProblem;

use crate::spec::{BenchSpec, ProblemSpec};
use crate::{create_dir, io_err, median, BenchError};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScalingRow {
    pub problem: String,
    pub method: String,
    pub n_x: usize,
    pub n_p: usize,
    pub direction_time_median_s: f64,
    pub assemble_s: f64,
    pub factor_s: f64,
    pub solve_s: f64,
    /// dense path: `dc/dx` factorization plus `n_p` back-substitutions
    pub sens_matrix_s: f64,
    /// dense path: Cholesky of the reduced Hessian
    pub dense_factor_s: f64,
    pub lin_rel_residual: f64,
    pub lin_iters: usize,
    pub fill_nnz: usize,
    pub error: String,
}

impl ScalingRow {
    fn failed(problem: &str, method: Method, n_x: usize, n_p: usize, error: String) -> Self {
        Self {
            problem: problem.to_string(),
            method: method.name().to_string(),
            n_x,
            n_p,
            direction_time_median_s: f64::NAN,
            assemble_s: f64::NAN,
            factor_s: f64::NAN,
            solve_s: f64::NAN,
            sens_matrix_s: f64::NAN,
            dense_factor_s: f64::NAN,
            lin_rel_residual: f64::NAN,
            lin_iters: 0,
            fill_nnz: 0,
            error,
        }
    }
}

/// Times `repetitions` direction computations at `(x, p)` with an empty
/// L-BFGS history; every component is the median over repetitions. The
/// forward solve is not timed.
pub fn time_direction(
    prob: &dyn EquilibriumProblem,
    x: &[f64],
    p: &[f64],
    cfg: &OptimizerConfig,
    repetitions: usize,
    problem_name: &str,
) -> ScalingRow {
    let history = LbfgsHistory::new(cfg.lbfgs_history.max(1));
    let mut cols: [Vec<f64>; 6] = Default::default();
    let mut last = None;
    for _ in 0..repetitions.max(1) {
        match compute_direction(prob, x, p, cfg, &history) {
            Ok(d) => {
                let t = d.timings;
                for (c, v) in cols.iter_mut().zip([
                    t.total_s,
                    t.assemble_s,
                    t.factor_s,
                    t.solve_s,
                    t.sens_matrix_s,
                    t.dense_factor_s,
                ]) {
                    c.push(v);
                }
                last = Some(d);
            }
            Err(e) => {
                return ScalingRow::failed(
                    problem_name,
                    cfg.method,
                    prob.n_x(),
                    prob.n_p(),
                    e.to_string(),
                );
            }
        }
    }
    let d = last.expect("at least one repetition");
    let [mut total, mut assemble, mut factor, mut solve, mut sens, mut dense] = cols;
    ScalingRow {
        problem: problem_name.to_string(),
        method: cfg.method.name().to_string(),
        n_x: prob.n_x(),
        n_p: prob.n_p(),
        direction_time_median_s: median(&mut total),
        assemble_s: median(&mut assemble),
        factor_s: median(&mut factor),
        solve_s: median(&mut solve),
        sens_matrix_s: median(&mut sens),
        dense_factor_s: median(&mut dense),
        lin_rel_residual: d.report.relative_residual,
        lin_iters: d.report.iterations,
        fill_nnz: d.report.fill_nnz,
        error: String::new(),
    }
}

fn sweep_cell(
    spec: &BenchSpec,
    problem: &ProblemSpec,
    size: usize,
    methods: &[Method],
) -> Vec<ScalingRow> {
    let name = problem.name();
    let built = problem
        .resized(size)
        .and_then(|p| p.build(spec.seed))
        .and_then(|prob| {
            let p0 = prob.initial_parameters();
            let x0 = prob.solve_equilibrium(&p0, None)?;
            Ok((prob, p0, x0))
        });
    match built {
        Ok((prob, p0, x0)) => methods
            .iter()
            .map(|&m| {
                time_direction(
                    prob.as_ref(),
                    &x0,
                    &p0,
                    &spec.optimizer_config(m),
                    spec.repetitions,
                    name,
                )
            })
            .collect(),
        Err(e) => methods
            .iter()
            .map(|&m| ScalingRow::failed(name, m, 0, size, e.to_string()))
            .collect(),
    }
}

/// Sweeps the configured sizes sequentially so timings do not compete for
/// cores. Failed cells become rows with a non-empty `error`.
pub fn cmd_scaling(spec: &BenchSpec, out: &Path) -> Result<Vec<ScalingRow>, BenchError> {
    let methods = spec.parsed_methods()?;
    let problem = spec.problem()?;
    if spec.sweep.is_empty() {
        return Err(BenchError::Config(
            "`sweep` must list at least one size".into(),
        ));
    }
    if spec.repetitions == 0 {
        return Err(BenchError::Config("`repetitions` must be >= 1".into()));
    }
    create_dir(out)?;
    let mut rows = Vec::new();
    for &size in &spec.sweep {
        rows.extend(sweep_cell(spec, problem, size, &methods));
    }
    let path = out.join("scaling.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()
        .map_err(io_err(format!("writing {}", path.display())))?;
    Ok(rows)
}
