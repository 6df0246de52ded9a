mod common;

use sgn_core::optimize::{
    direction_lbfgs_sgn, direction_sgn, minimize, BoundMode, LbfgsHistory, Method, OptimizerConfig,
    OptimizerError, TerminationReason,
};
use sgn_core::problems::{
    CarConfig, CarControlProblem, ClothConfig, ClothControlProblem, LogBarrier, QuadraticToy,
    SpringBarConfig, SpringBarProblem,
};
use sgn_core::EquilibriumProblem;

fn bar(nw: usize, nh: usize, w_r: f64) -> SpringBarProblem {
    SpringBarProblem::new(SpringBarConfig {
        nw,
        nh,
        w_r,
        ..Default::default()
    })
}

fn run(
    prob: &dyn EquilibriumProblem,
    method: Method,
    max_iters: usize,
) -> sgn_core::optimize::OptimizerRun {
    let cfg = OptimizerConfig {
        max_iters,
        ..OptimizerConfig::with_method(method)
    };
    minimize(prob, &prob.initial_parameters(), &cfg).unwrap()
}

fn strictly_monotone(run: &sgn_core::optimize::OptimizerRun) -> bool {
    run.records.windows(2).all(|w| w[1].f < w[0].f)
}

#[test]
fn sparse_and_dense_gauss_newton_follow_the_same_path() {
    let prob = bar(8, 2, 1e-3);
    let (s, d) = (run(&prob, Method::Sgn, 20), run(&prob, Method::Dgn, 20));
    assert_eq!(s.records.len(), d.records.len());
    for (a, b) in s.records.iter().zip(&d.records) {
        assert!(
            (a.f - b.f).abs() <= 1e-8 * (1.0 + b.f.abs()),
            "{} vs {}",
            a.f,
            b.f
        );
    }
    assert_eq!(s.termination, TerminationReason::Converged);
}

#[test]
fn gradient_descent_lags_gauss_newton() {
    let prob = bar(8, 2, 0.0);
    let s = run(&prob, Method::Sgn, 30);
    let gd = run(&prob, Method::Gd, s.iterations());
    assert!(strictly_monotone(&s) && strictly_monotone(&gd));
    assert!(s.final_record().grad_norm <= 1e-5);
    assert!(gd.final_record().grad_norm > 10.0 * s.final_record().grad_norm);
}

#[test]
fn every_reduced_space_method_decreases_the_spring_bar_objective() {
    let prob = bar(6, 2, 1e-2);
    for method in Method::ALL {
        if matches!(method, Method::Sqp | Method::Bgn | Method::SparseNewton) {
            continue;
        }
        let r = run(&prob, method, 8);
        assert!(strictly_monotone(&r), "{method}");
        assert!(r.final_record().f < r.records[0].f, "{method}");
    }
    // the bar has no constraint second derivatives
    let err = minimize(
        &prob,
        &prob.initial_parameters(),
        &OptimizerConfig::with_method(Method::SparseNewton),
    );
    assert!(matches!(
        err,
        Err(OptimizerError::Sensitivity(
            sgn_core::SensitivityError::CapabilityMissing(_)
        ))
    ));
    // block substitution needs w_R = 0
    let r = run(&bar(6, 2, 0.0), Method::Bgn, 8);
    assert!(strictly_monotone(&r));
}

#[test]
fn block_substitution_rejects_regularized_objective() {
    let prob = bar(6, 2, 1e-2);
    let err = minimize(
        &prob,
        &prob.initial_parameters(),
        &OptimizerConfig::with_method(Method::Bgn),
    );
    assert!(
        matches!(err, Err(OptimizerError::NotApplicable { .. })),
        "{err:?}"
    );
}

#[test]
fn car_control_respects_bounds_and_approaches_target() {
    let car = CarControlProblem::new(CarConfig {
        n_steps: 150,
        ..Default::default()
    });
    let r = run(&car, Method::Sgn, 40);
    let (lo, hi) = car.bounds().unwrap();
    for p in &r.iterates {
        assert!(p
            .iter()
            .zip(&lo)
            .zip(&hi)
            .all(|((v, l), h)| v >= l && v <= h));
    }
    assert!(strictly_monotone(&r));
    assert!(
        car.final_position_error(&r.x)
            < 0.1 * car.final_position_error(&car.solve_equilibrium(&r.iterates[0], None).unwrap())
    );
}

#[test]
fn hybrid_lbfgs_with_empty_history_is_the_gauss_newton_step() {
    let car = CarControlProblem::new(CarConfig {
        n_steps: 30,
        ..Default::default()
    });
    let cl = ClothControlProblem::new(ClothConfig {
        side: 3,
        n_steps: 4,
        ..Default::default()
    })
    .unwrap();
    let problems: Vec<Box<dyn EquilibriumProblem>> =
        vec![Box::new(bar(6, 2, 0.0)), Box::new(car), Box::new(cl)];
    let cfg = OptimizerConfig::default();
    for prob in &problems {
        let p = prob.initial_parameters();
        let x = prob.solve_equilibrium(&p, None).unwrap();
        let a = direction_sgn(prob.as_ref(), &x, &p, &cfg).unwrap();
        let b = direction_lbfgs_sgn(prob.as_ref(), &x, &p, &LbfgsHistory::new(5), &cfg).unwrap();
        assert!(
            common::rel(&b.dp, &a.dp) <= 1e-14,
            "{}",
            common::rel(&b.dp, &a.dp)
        );
    }
}

#[test]
fn sqp_reaches_a_feasible_stationary_point() {
    let r = minimize(
        &QuadraticToy,
        &[0.2, 0.1],
        &OptimizerConfig::with_method(Method::Sqp),
    )
    .unwrap();
    assert_eq!(r.termination, TerminationReason::Converged);
    let reduced = run(&QuadraticToy, Method::SparseNewton, 50);
    assert!(common::rel(&r.p, &reduced.p) <= 1e-4);
}

#[test]
fn sqp_refuses_projected_bounds_but_accepts_a_barrier() {
    let car = CarControlProblem::new(CarConfig {
        n_steps: 10,
        ..Default::default()
    });
    let err = minimize(
        &car,
        &car.initial_parameters(),
        &OptimizerConfig::with_method(Method::Sqp),
    );
    assert!(matches!(err, Err(OptimizerError::NotApplicable { .. })));

    let (lo, hi) = car.bounds().unwrap();
    let barrier = LogBarrier::new(car, lo, hi);
    let cfg = OptimizerConfig {
        bound_mode: BoundMode::LogBarrierInProblem,
        max_iters: 30,
        ..OptimizerConfig::with_method(Method::Sqp)
    };
    let r = minimize(&barrier, &barrier.initial_parameters(), &cfg).unwrap();
    assert!(r.final_record().grad_norm < r.records[0].grad_norm);
}
