//! `verify`: equivalence and derivative checks with pass/fail verdicts.
//!
//! Every check returns the worst discrepancy over its cases next to the
//! tolerance it is held to. Saddle-point solves made along the way are
//! tallied so their residuals can be checked as a whole.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sgn_core::dense::{norm2, scaled, sub};
use sgn_core::linsolve::{factor_sparse, solve_kkt_stabilized, SolveReport, StabilizationConfig};
use sgn_core::optimize::{
    direction_bgn, direction_cg_gn, direction_dgn, direction_lbfgs_sgn, direction_sgn, minimize,
    LbfgsHistory, Method, OptimizerConfig,
};
use sgn_core::problems::{
    random_instance, CarConfig, CarControlProblem, ClothConfig, ClothControlProblem, QuadraticToy,
    RandomInstanceConfig, ScalarCubic, SpringBarConfig, SpringBarProblem,
};
use sgn_core::sensitivity::{
    adjoint_gradient, adjoint_multipliers, assemble_kkt_newton, assemble_sgn, dense_full_hessian,
    dense_gn_hessian, gn_blocks,
};
use sgn_core::{CscMatrix, EquilibriumProblem};

use crate::spec::{BenchSpec, VerifySpec};
use crate::{write_json, BenchError};

/// Deliberate defects for checking that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fault {
    /// flips the sign of the `B` block when assembling the sparse system
    SgnSign,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sgn-sign" => Ok(Fault::SgnSign),
            _ => Err(format!("unknown fault '{s}'; valid faults: sgn-sign")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct KktTally {
    pub solves: usize,
    pub max_rel_residual: f64,
    pub max_iterations: usize,
}

impl KktTally {
    pub fn record(&mut self, r: &SolveReport) {
        self.solves += 1;
        self.max_rel_residual = self.max_rel_residual.max(r.relative_residual);
        self.max_iterations = self.max_iterations.max(r.iterations);
    }

    pub fn merge(&mut self, other: &KktTally) {
        self.solves += other.solves;
        self.max_rel_residual = self.max_rel_residual.max(other.max_rel_residual);
        self.max_iterations = self.max_iterations.max(other.max_iterations);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub elapsed_s: f64,
    pub note: String,
    /// the error sits at the rounding floor of the difference quotient, so
    /// its convergence order could not be observed
    pub roundoff_limited: bool,
}

impl CheckResult {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64, start: Instant) -> Self {
        Self {
            name: name.to_string(),
            cases,
            worst,
            tolerance,
            passed: cases > 0 && worst <= tolerance,
            elapsed_s: start.elapsed().as_secs_f64(),
            note: String::new(),
            roundoff_limited: false,
        }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = note;
        self
    }

    fn error(name: &str, err: impl fmt::Display, start: Instant) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            worst: f64::INFINITY,
            tolerance: 0.0,
            passed: false,
            elapsed_s: start.elapsed().as_secs_f64(),
            note: err.to_string(),
            roundoff_limited: false,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:>5} cases  worst {:>10.3e}  tol {:>8.1e}  {:>6.2}s  {}",
            self.name,
            self.cases,
            self.worst,
            self.tolerance,
            self.elapsed_s,
            match (self.passed, self.roundoff_limited) {
                (false, _) => "FAIL",
                (true, false) => "PASS",
                (true, true) => "PASS*",
            }
        )?;
        if !self.note.is_empty() {
            write!(f, "  ({})", self.note)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub fault: Option<Fault>,
    pub checks: Vec<CheckResult>,
    pub kkt: KktTally,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

type Result<T> = std::result::Result<T, BenchError>;

/// `|a - b| / (1 + |b|)`
fn mixed_error(a: &[f64], b: &[f64]) -> f64 {
    norm2(&sub(a, b)) / (1.0 + norm2(b))
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(a)
    } else {
        norm2(&sub(a, b)) / nb
    }
}

/// Gauss-Newton step from the sparse saddle-point system, assembled here so
/// a fault can be injected between the blocks and the assembly.
pub fn sgn_step<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    fault: Option<Fault>,
    tally: &mut KktTally,
) -> Result<Vec<f64>> {
    let mut blocks = gn_blocks(prob, x, p)?;
    if fault == Some(Fault::SgnSign) {
        blocks.b.scale(-1.0);
    }
    let k = assemble_sgn(prob, x, p, &blocks)?;
    let (z, report) = solve_kkt_stabilized(&k, &k.rhs, &StabilizationConfig::default())
        .map_err(sgn_core::SensitivityError::from)?;
    tally.record(&report);
    Ok(k.split_solution(&z).1.to_vec())
}

/// A problem with the points a short optimizer run visits.
pub struct Benchmark {
    pub name: &'static str,
    pub problem: Box<dyn EquilibriumProblem + Sync>,
    /// `(p, x(p))` pairs
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
}

pub fn spring_bar(vs: &VerifySpec) -> SpringBarProblem {
    SpringBarProblem::new(SpringBarConfig {
        nw: vs.spring_bar.0,
        nh: vs.spring_bar.1,
        w_r: 0.0,
        ..Default::default()
    })
}

pub fn car(vs: &VerifySpec) -> CarControlProblem {
    CarControlProblem::new(CarConfig {
        n_steps: vs.car_steps,
        ..Default::default()
    })
}

pub fn cloth(vs: &VerifySpec) -> Result<ClothControlProblem> {
    ClothControlProblem::new(ClothConfig {
        side: vs.cloth_side,
        n_steps: vs.cloth_steps,
        ..Default::default()
    })
    .map_err(|e| BenchError::Config(e.to_string()))
}

/// The first `count` iterates of gradient descent from the initial
/// parameters; unlike Gauss-Newton it does not converge within them.
pub fn first_iterates(
    prob: &dyn EquilibriumProblem,
    count: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let cfg = OptimizerConfig {
        max_iters: count.saturating_sub(1),
        grad_tol: 1e-300,
        ..OptimizerConfig::with_method(Method::Gd)
    };
    let run = minimize(prob, &prob.initial_parameters(), &cfg)?;
    let mut guess: Option<Vec<f64>> = None;
    let mut out = Vec::new();
    for p in run.iterates.into_iter().take(count) {
        let x = prob.solve_equilibrium(&p, guess.as_deref())?;
        guess = Some(x.clone());
        out.push((p, x));
    }
    Ok(out)
}

pub fn benchmarks(vs: &VerifySpec) -> Result<Vec<Benchmark>> {
    let problems: Vec<(&'static str, Box<dyn EquilibriumProblem + Sync>)> = vec![
        ("spring_bar", Box::new(spring_bar(vs))),
        ("car", Box::new(car(vs))),
        ("cloth", Box::new(cloth(vs)?)),
    ];
    problems
        .into_iter()
        .map(|(name, problem)| {
            let points = first_iterates(problem.as_ref(), vs.iterates)?;
            Ok(Benchmark {
                name,
                problem,
                points,
            })
        })
        .collect()
}

/// Sparse vs dense Gauss-Newton on seeded random instances.
pub fn check_sgn_dgn_random(
    vs: &VerifySpec,
    seed: u64,
    fault: Option<Fault>,
    tally: &mut KktTally,
) -> CheckResult {
    let start = Instant::now();
    let name = "sgn_vs_dgn_random";
    let cfg = RandomInstanceConfig {
        n_x: vs.random_n_x,
        n_p: vs.random_n_p,
        ..Default::default()
    };
    let ocfg = OptimizerConfig::default();
    let mut worst: f64 = 0.0;
    for i in 0..vs.random_instances {
        let prob = random_instance(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), &cfg);
        let p = prob.initial_parameters();
        let step = (|| -> Result<f64> {
            let x = prob.solve_equilibrium(&p, None)?;
            let s = sgn_step(&prob, &x, &p, fault, tally)?;
            let d = direction_dgn(&prob, &x, &p, &ocfg)?;
            Ok(mixed_error(&s, &d.dp))
        })();
        match step {
            Ok(e) => worst = worst.max(e),
            Err(e) => return CheckResult::error(name, format!("instance {i}: {e}"), start),
        }
    }
    CheckResult::new(name, vs.random_instances, worst, 1e-6, start)
}

/// Sparse vs dense Gauss-Newton along benchmark iterates.
pub fn check_sgn_dgn_benchmarks(
    benches: &[Benchmark],
    fault: Option<Fault>,
    tally: &mut KktTally,
) -> CheckResult {
    let start = Instant::now();
    let name = "sgn_vs_dgn_benchmarks";
    let ocfg = OptimizerConfig::default();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut per = Vec::new();
    for b in benches {
        let mut w: f64 = 0.0;
        for (p, x) in &b.points {
            let r = (|| -> Result<f64> {
                let s = sgn_step(b.problem.as_ref(), x, p, fault, tally)?;
                let d = direction_dgn(b.problem.as_ref(), x, p, &ocfg)?;
                Ok(mixed_error(&s, &d.dp))
            })();
            match r {
                Ok(e) => w = w.max(e),
                Err(e) => return CheckResult::error(name, format!("{}: {e}", b.name), start),
            }
            cases += 1;
        }
        per.push(format!("{} {w:.1e}", b.name));
        worst = worst.max(w);
    }
    CheckResult::new(name, cases, worst, 1e-6, start).with_note(per.join(", "))
}

/// Block substitution vs saddle point on the spring bar without regularizer.
pub fn check_block_solve(bench: &Benchmark, tally: &mut KktTally) -> CheckResult {
    let start = Instant::now();
    let name = "bgn_vs_sgn_spring_bar";
    let ocfg = OptimizerConfig::default();
    let mut worst: f64 = 0.0;
    for (p, x) in &bench.points {
        let r = (|| -> Result<f64> {
            let s = sgn_step(bench.problem.as_ref(), x, p, None, tally)?;
            let b = direction_bgn(bench.problem.as_ref(), x, p, &ocfg)?;
            Ok(relative(&b.dp, &s))
        })();
        match r {
            Ok(e) => worst = worst.max(e),
            Err(e) => return CheckResult::error(name, e, start),
        }
    }
    CheckResult::new(name, bench.points.len(), worst, 1e-8, start)
}

fn lagrangian_step<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
    tally: &mut KktTally,
) -> Result<Vec<f64>> {
    let lambda = adjoint_multipliers(prob, x, p)?;
    let k = assemble_kkt_newton(prob, x, p, &lambda)?;
    let (z, report) = solve_kkt_stabilized(&k, &k.rhs, &StabilizationConfig::default())
        .map_err(sgn_core::SensitivityError::from)?;
    tally.record(&report);
    Ok(k.split_solution(&z).1.to_vec())
}

fn reduced_newton_step<P: EquilibriumProblem + ?Sized>(
    prob: &P,
    x: &[f64],
    p: &[f64],
) -> Result<Vec<f64>> {
    let h = dense_full_hessian(prob, x, p)?;
    let g = adjoint_gradient(prob, x, p)?;
    let lu = factor_sparse(&CscMatrix::from_dense(&h)).map_err(sgn_core::SensitivityError::from)?;
    Ok(lu.solve(&scaled(-1.0, &g)))
}

/// Newton step on the Lagrangian at the adjoint multipliers vs the reduced
/// Newton step with the exact Hessian, on both toys.
pub fn check_newton_equivalence(vs: &VerifySpec, seed: u64, tally: &mut KktTally) -> CheckResult {
    let start = Instant::now();
    let name = "kkt_vs_reduced_newton";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e02);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..vs.newton_points {
        let pc = [rng.random_range(0.5..6.0)];
        let pq = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
        let r = (|| -> Result<f64> {
            let xc = ScalarCubic.solve_equilibrium(&pc, None)?;
            let xq = QuadraticToy.solve_equilibrium(&pq, None)?;
            let ec = relative(
                &lagrangian_step(&ScalarCubic, &xc, &pc, tally)?,
                &reduced_newton_step(&ScalarCubic, &xc, &pc)?,
            );
            let eq = relative(
                &lagrangian_step(&QuadraticToy, &xq, &pq, tally)?,
                &reduced_newton_step(&QuadraticToy, &xq, &pq)?,
            );
            Ok(ec.max(eq))
        })();
        match r {
            Ok(e) => worst = worst.max(e),
            Err(e) => return CheckResult::error(name, e, start),
        }
        cases += 2;
    }
    CheckResult::new(name, cases, worst, 1e-6, start)
}

/// Central differences of `f(x(p), p)` through the forward solve, all
/// coordinates in parallel.
pub fn fd_gradient<P: EquilibriumProblem + Sync + ?Sized>(
    prob: &P,
    p: &[f64],
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    (0..p.len())
        .into_par_iter()
        .map(|j| {
            let eval = |s: f64| -> Result<f64> {
                let mut q = p.to_vec();
                q[j] += s * h;
                let xq = prob.solve_equilibrium(&q, Some(x))?;
                Ok(prob.objective(&xq, &q))
            };
            Ok((eval(1.0)? - eval(-1.0)?) / (2.0 * h))
        })
        .collect()
}

/// Relative adjoint-vs-difference errors at each step size for one point,
/// with the rounding error expected of a central difference at that step:
/// `sqrt(n_p) eps |f| / (h |g|)`.
pub struct GradientErrors {
    pub errors: Vec<f64>,
    pub rounding_floor: Vec<f64>,
}

pub fn gradient_errors<P: EquilibriumProblem + Sync + ?Sized>(
    prob: &P,
    p: &[f64],
    steps: &[f64],
) -> Result<GradientErrors> {
    let x = prob.solve_equilibrium(p, None)?;
    let g = adjoint_gradient(prob, &x, p)?;
    let scale = (p.len() as f64).sqrt() * f64::EPSILON * prob.objective(&x, p).abs() / norm2(&g);
    let errors = steps
        .iter()
        .map(|&h| Ok(relative(&fd_gradient(prob, p, &x, h)?, &g)))
        .collect::<Result<_>>()?;
    Ok(GradientErrors {
        errors,
        rounding_floor: steps.iter().map(|h| scale / h).collect(),
    })
}

fn random_points(
    name: &str,
    prob: &dyn EquilibriumProblem,
    count: usize,
    rng: &mut ChaCha8Rng,
    vs: &VerifySpec,
) -> Vec<Vec<f64>> {
    let p0 = prob.initial_parameters();
    (0..count)
        .map(|_| match name {
            "car" => (0..p0.len() / 2)
                .flat_map(|_| [rng.random_range(0.3..1.2), rng.random_range(-0.3..0.3)])
                .collect(),
            "spring_bar" => {
                let spacing = 1.0 / (vs.spring_bar.0 - 1) as f64;
                p0.iter()
                    .map(|v| v + 0.1 * spacing * rng.random_range(-1.0..1.0))
                    .collect()
            }
            _ => p0
                .iter()
                .map(|v| v + 0.05 * rng.random_range(-1.0..1.0))
                .collect(),
        })
        .collect()
}

/// Adjoint gradients against central differences at random parameters.
///
/// Every error must be within the problem's tolerance. Where the error at
/// the smallest step stands well above the rounding floor, halving `h` must
/// also divide it by roughly four (ratio in `[2.5, 6]`, geometric mean over
/// points). Otherwise the order is unobservable and the result is flagged
/// `roundoff_limited`.
pub fn check_gradients(benches: &[Benchmark], vs: &VerifySpec, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d);
    benches
        .iter()
        .map(|b| {
            let start = Instant::now();
            let name = format!("adjoint_vs_fd_{}", b.name);
            let tol = if b.name == "cloth" { 1e-3 } else { 1e-4 };
            let points = random_points(b.name, b.problem.as_ref(), vs.fd_points, &mut rng, vs);
            let mut worst: f64 = 0.0;
            let mut resolved = true;
            let mut floor: f64 = 0.0;
            let mut log_ratios = vec![0.0; vs.fd_steps.len().saturating_sub(1)];
            for p in &points {
                match gradient_errors(b.problem.as_ref(), p, &vs.fd_steps) {
                    Ok(ge) => {
                        worst = ge.errors.iter().copied().fold(worst, f64::max);
                        for (k, w) in ge.errors.windows(2).enumerate() {
                            log_ratios[k] += (w[0] / w[1]).ln() / points.len() as f64;
                        }
                        if let (Some(e), Some(r)) = (ge.errors.last(), ge.rounding_floor.last()) {
                            resolved &= *e > 10.0 * r;
                            floor = floor.max(*r);
                        }
                    }
                    Err(e) => return CheckResult::error(&name, e, start),
                }
            }
            let ratios: Vec<f64> = log_ratios.iter().map(|l| l.exp()).collect();
            let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
            let mut res = CheckResult::new(&name, points.len(), worst, tol, start);
            if resolved {
                res.passed &= ratios.iter().all(|r| (2.5..=6.0).contains(r));
                res.with_note(format!("error ratio per halving {}", shown.join(", ")))
            } else {
                res.roundoff_limited = true;
                res.with_note(format!(
                    "error ratio per halving {}; order unobservable, rounding floor {floor:.1e}",
                    shown.join(", ")
                ))
            }
        })
        .collect()
}

/// With an empty history the hybrid L-BFGS direction is the sparse
/// Gauss-Newton direction.
pub fn check_lbfgs_identity(benches: &[Benchmark], tally: &mut KktTally) -> CheckResult {
    let start = Instant::now();
    let name = "lbfgs_sgn_empty_history";
    let cfg = OptimizerConfig::default();
    let history = LbfgsHistory::new(cfg.lbfgs_history);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for b in benches {
        let Some((p, x)) = b.points.first() else {
            continue;
        };
        let r = (|| -> Result<f64> {
            let s = direction_sgn(b.problem.as_ref(), x, p, &cfg)?;
            let l = direction_lbfgs_sgn(b.problem.as_ref(), x, p, &history, &cfg)?;
            tally.record(&s.report);
            tally.record(&l.report);
            Ok(relative(&l.dp, &s.dp))
        })();
        match r {
            Ok(e) => worst = worst.max(e),
            Err(e) => return CheckResult::error(name, e, start),
        }
        cases += 1;
    }
    CheckResult::new(name, cases, worst, 1e-14, start)
}

/// Reduced-space CG: the a-posteriori residual is within the requested
/// threshold, and a tight threshold reproduces the dense step.
pub fn check_cg_contract(prob: &dyn EquilibriumProblem) -> Vec<CheckResult> {
    let start = Instant::now();
    let p = prob.initial_parameters();
    let run = (|| -> Result<(f64, f64)> {
        let x = prob.solve_equilibrium(&p, None)?;
        let h = dense_gn_hessian(prob, &x, &p)?;
        let loose = OptimizerConfig {
            cg_eta: 1e-3,
            ..OptimizerConfig::with_method(Method::CgGn)
        };
        let d = direction_cg_gn(prob, &x, &p, &loose)?;
        let r: Vec<f64> = h
            .matvec(&d.dp)
            .iter()
            .zip(&d.grad)
            .map(|(a, b)| a + b)
            .collect();
        let residual = norm2(&r) / norm2(&d.grad);
        let tight = OptimizerConfig {
            cg_eta: 1e-10,
            ..loose
        };
        let d = direction_cg_gn(prob, &x, &p, &tight)?;
        let dense = direction_dgn(prob, &x, &p, &tight)?;
        Ok((residual, relative(&d.dp, &dense.dp)))
    })();
    match run {
        Ok((residual, agreement)) => vec![
            CheckResult::new("cg_gn_residual_eta_1e-3", 1, residual, 1e-3, start),
            CheckResult::new("cg_gn_vs_dgn_eta_1e-10", 1, agreement, 1e-8, start),
        ],
        Err(e) => vec![CheckResult::error("cg_gn_contract", e, start)],
    }
}

pub fn check_kkt_accuracy(tally: &KktTally) -> CheckResult {
    let start = Instant::now();
    let mut r = CheckResult::new(
        "kkt_solve_residuals",
        tally.solves,
        tally.max_rel_residual,
        1e-10,
        start,
    );
    r.passed &= tally.max_iterations <= 50;
    r.with_note(format!(
        "max refinement iterations {}",
        tally.max_iterations
    ))
}

/// Runs the whole suite, prints the table, and writes `verify.json` to `out`.
pub fn cmd_verify(
    spec: &BenchSpec,
    out: Option<&Path>,
    fault: Option<Fault>,
) -> Result<VerifyReport> {
    let vs = &spec.verify;
    let seed = spec.seed;
    let mut tally = KktTally::default();
    let mut checks = vec![check_sgn_dgn_random(vs, seed, fault, &mut tally)];
    let benches = benchmarks(vs)?;
    checks.push(check_sgn_dgn_benchmarks(&benches, fault, &mut tally));
    checks.push(check_block_solve(&benches[0], &mut tally));
    checks.push(check_newton_equivalence(vs, seed, &mut tally));
    checks.extend(check_gradients(&benches, vs, seed));
    checks.push(check_lbfgs_identity(&benches, &mut tally));
    checks.extend(check_cg_contract(benches[1].problem.as_ref()));
    checks.push(check_kkt_accuracy(&tally));

    let report = VerifyReport {
        seed,
        fault,
        checks,
        kkt: tally,
    };
    for c in &report.checks {
        println!("{c}");
    }
    if let Some(dir) = out {
        crate::create_dir(dir)?;
        write_json(&dir.join("verify.json"), &report)?;
    }
    Ok(report)
}
