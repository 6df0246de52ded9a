//! `optimize`: one optimizer run per method, convergence traces and a summary.

use std::path::Path;

use serde::Serialize;
use sgn_core::optimize::{minimize, IterationRecord, Method, OptimizerRun};
use sgn_core::EquilibriumProblem;

use crate::spec::BenchSpec;
use crate::{create_dir, io_err, write_json, BenchError};

pub const CONVERGENCE_HEADER: [&str; 8] = [
    "iter",
    "f",
    "grad_norm",
    "step_len",
    "dir_time_s",
    "fwd_time_s",
    "elapsed_s",
    "lin_rel_residual",
];

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub termination: Option<String>,
    pub iterations: usize,
    pub final_f: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub elapsed_s: f64,
    pub direction_time_s: f64,
    pub forward_time_s: f64,
    pub descent_fallbacks: usize,
    /// best feasible objective so far minus `f_min`, per iteration
    pub suboptimality: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeSummary {
    pub problem: String,
    pub n_x: usize,
    pub n_p: usize,
    pub seed: u64,
    /// smallest feasible objective value seen by any method
    pub f_min: Option<f64>,
    pub methods: Vec<MethodSummary>,
}

pub fn write_convergence_csv(path: &Path, records: &[IterationRecord]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONVERGENCE_HEADER)?;
    for r in records {
        w.write_record(&[
            r.iter.to_string(),
            format!("{:e}", r.f),
            format!("{:e}", r.grad_norm),
            format!("{:e}", r.step_len),
            format!("{:e}", r.dir_time_s),
            format!("{:e}", r.fwd_time_s),
            format!("{:e}", r.elapsed_s),
            format!("{:e}", r.lin_rel_residual),
        ])?;
    }
    w.flush()
        .map_err(io_err(format!("writing {}", path.display())))?;
    Ok(())
}

/// Objective at each iterate on the constraint manifold. Reduced-space runs
/// already record it; SQP iterates are generally infeasible and get re-solved.
fn feasible_objectives(prob: &dyn EquilibriumProblem, run: &OptimizerRun) -> Vec<f64> {
    if run.method != Method::Sqp {
        return run.records.iter().map(|r| r.f).collect();
    }
    let mut guess: Option<Vec<f64>> = None;
    run.iterates
        .iter()
        .map(|p| match prob.solve_equilibrium(p, guess.as_deref()) {
            Ok(x) => {
                let f = prob.objective(&x, p);
                guess = Some(x);
                f
            }
            Err(_) => f64::INFINITY,
        })
        .collect()
}

struct Outcome {
    method: Method,
    result: Result<(OptimizerRun, Vec<f64>), String>,
}

fn run_method(spec: &BenchSpec, seed: u64, method: Method) -> Result<Outcome, BenchError> {
    let prob = spec.problem()?.build(seed)?;
    let p0 = prob.initial_parameters();
    let result = minimize(prob.as_ref(), &p0, &spec.optimizer_config(method))
        .map(|run| {
            let f = feasible_objectives(prob.as_ref(), &run);
            (run, f)
        })
        .map_err(|e| e.to_string());
    Ok(Outcome { method, result })
}

/// Runs every configured method from the problem's initial parameters,
/// `jobs` at a time. Writes `<out>/<method>/convergence.csv` per method and
/// `<out>/summary.json`; a method that fails is reported in the summary.
pub fn cmd_optimize(
    spec: &BenchSpec,
    out: &Path,
    jobs: usize,
) -> Result<OptimizeSummary, BenchError> {
    let methods = spec.parsed_methods()?;
    let problem = spec.problem()?;
    let prob = problem.build(spec.seed)?;
    let (n_x, n_p) = (prob.n_x(), prob.n_p());
    drop(prob);
    create_dir(out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<Outcome, BenchError>> = pool.install(|| {
        use rayon::prelude::*;
        methods
            .par_iter()
            .map(|&m| run_method(spec, spec.seed, m))
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let f_min = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok())
        .flat_map(|(_, f)| f.iter().copied())
        .filter(|f| f.is_finite())
        .fold(None, |acc: Option<f64>, f| {
            Some(acc.map_or(f, |a| a.min(f)))
        });

    let mut summaries = Vec::new();
    for o in &outcomes {
        let name = o.method.name().to_string();
        let summary = match &o.result {
            Ok((run, feasible)) => {
                let dir = out.join(&name);
                create_dir(&dir)?;
                write_convergence_csv(&dir.join("convergence.csv"), &run.records)?;
                let mut best = f64::INFINITY;
                let base = f_min.unwrap_or(0.0);
                let suboptimality = feasible
                    .iter()
                    .map(|&f| {
                        best = best.min(f);
                        (best - base).max(0.0)
                    })
                    .collect();
                let last = run.final_record();
                MethodSummary {
                    method: name,
                    termination: Some(run.termination.name().to_string()),
                    iterations: run.iterations(),
                    final_f: Some(last.f),
                    final_grad_norm: Some(last.grad_norm),
                    elapsed_s: last.elapsed_s,
                    direction_time_s: run.records.iter().map(|r| r.dir_time_s).sum(),
                    forward_time_s: run.records.iter().map(|r| r.fwd_time_s).sum(),
                    descent_fallbacks: run.descent_fallbacks,
                    suboptimality,
                    error: None,
                }
            }
            Err(msg) => {
                eprintln!("warning: {name} failed: {msg}");
                MethodSummary {
                    method: name,
                    termination: None,
                    iterations: 0,
                    final_f: None,
                    final_grad_norm: None,
                    elapsed_s: 0.0,
                    direction_time_s: 0.0,
                    forward_time_s: 0.0,
                    descent_fallbacks: 0,
                    suboptimality: Vec::new(),
                    error: Some(msg.clone()),
                }
            }
        };
        summaries.push(summary);
    }
    let summary = OptimizeSummary {
        problem: problem.name().to_string(),
        n_x,
        n_p,
        seed: spec.seed,
        f_min,
        methods: summaries,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
