mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgn_core::problems::{
    CarConfig, CarControlProblem, ClothConfig, ClothControlProblem, SpringBarConfig,
    SpringBarProblem,
};
use sgn_core::sensitivity::adjoint_gradient;
use sgn_core::sim::{rollout_explicit, CarDynamics};
use sgn_core::EquilibriumProblem;

#[test]
fn constant_steering_traces_a_circle() {
    // Euler chords of length h v turning by h v tan s lie on a circle of
    // radius h v / (2 sin(h v tan s / 2)), which tends to 1 / tan s.
    let (v, s, n) = (1.0, 0.1_f64, 90);
    let dynamics = CarDynamics { h: 1.0 / 30.0 };
    let controls: Vec<f64> = (0..n).flat_map(|_| [v, s]).collect();
    let roll = rollout_explicit(&dynamics, &[0.0, 0.0, 0.0], &controls).unwrap();
    let dtheta = dynamics.h * v * s.tan();
    let radius = dynamics.h * v / (2.0 * (dtheta / 2.0).sin());
    // the chord from x^0 leaves along heading 0, so the center sits at
    // (h v / 2, r cos(dtheta / 2))
    let center = [dynamics.h * v / 2.0, radius * (dtheta / 2.0).cos()];
    for i in 0..=n {
        let st = roll.state(i);
        let d = ((st[0] - center[0]).powi(2) + (st[1] - center[1]).powi(2)).sqrt();
        assert!((d - radius).abs() <= 1e-10, "step {i}: {d} vs {radius}");
        assert!((st[2] - i as f64 * dtheta).abs() <= 1e-12);
    }
    assert!((radius - 1.0 / s.tan()).abs() <= 1e-3 * radius);
}

#[test]
fn car_dimensions_scale_with_horizon() {
    let car = CarControlProblem::new(CarConfig {
        n_steps: 5000,
        ..Default::default()
    });
    assert_eq!((car.n_x(), car.n_p()), (15000, 10000));
    let p = car.initial_parameters();
    let x = car.solve_equilibrium(&p, None).unwrap();
    assert!(x.iter().all(|v| v.is_finite()));
    assert!(common::norm(&car.constraints(&x, &p)) <= 1e-10);
    let jac = car.constraint_jacobians(&x, &p);
    assert_eq!(
        (jac.dcdx.rows(), jac.dcdx.cols(), jac.dcdp.cols()),
        (15000, 15000, 10000)
    );
}

#[test]
fn single_step_car_reaches_reachable_goal() {
    // one step from the origin with (v, s) moves to (h v, 0, h v tan s); pick
    // the target on that curve and the optimizer must find it
    let h = 0.5;
    let (v, s) = (0.8_f64, 0.3_f64);
    let car = CarControlProblem::new(CarConfig {
        n_steps: 1,
        h,
        target: [h * v, 0.0, h * v * s.tan()],
        initial_speed: 0.4,
        ..Default::default()
    });
    let cfg = sgn_core::optimize::OptimizerConfig {
        grad_tol: 1e-10,
        ..Default::default()
    };
    let run = sgn_core::optimize::minimize(&car, &car.initial_parameters(), &cfg).unwrap();
    assert!(
        (run.p[0] - v).abs() <= 1e-6 && (run.p[1] - s).abs() <= 1e-6,
        "{:?}",
        run.p
    );
    assert!(run.final_record().f <= 1e-12);
}

#[test]
fn spring_bar_static_solution_balances_forces() {
    let bar = SpringBarProblem::new(SpringBarConfig {
        nw: 10,
        nh: 3,
        ..Default::default()
    });
    let p = bar.initial_parameters();
    let sol = bar.solve_static_report(&p, &p).unwrap();
    assert!(sol.energies.windows(2).all(|w| w[1] <= w[0]));
    assert!(common::norm(&bar.constraints(&sol.x, &p)) <= 1e-8);
    // sagging under gravity: every free vertex moves down, the free end the most
    let drops: Vec<f64> = sol
        .x
        .iter()
        .skip(1)
        .step_by(2)
        .zip(p.iter().skip(1).step_by(2))
        .map(|(y, y0)| y0 - y)
        .collect();
    assert!(drops.iter().all(|&d| d > 0.0));
    let max_drop = drops.iter().cloned().fold(0.0, f64::max);
    assert!(bar.tip_sag(&sol.x) >= 0.9 * max_drop);
}

#[test]
fn weightless_bar_rests_at_its_rest_shape() {
    let bar = SpringBarProblem::new(SpringBarConfig {
        nw: 6,
        nh: 2,
        gravity: 0.0,
        ..Default::default()
    });
    let p = bar.initial_parameters();
    let x = bar.solve_equilibrium(&p, None).unwrap();
    assert!(common::rel(&x, &p) <= 1e-12);
}

fn cloth(side: usize, n_steps: usize) -> ClothControlProblem {
    ClothControlProblem::new(ClothConfig {
        side,
        n_steps,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn cloth_gradient_matches_differences_through_the_rollout() {
    let prob = cloth(2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p: Vec<f64> = prob
        .initial_parameters()
        .iter()
        .map(|v| v + 0.05 * rng.random_range(-1.0..1.0))
        .collect();
    let x = prob.solve_equilibrium(&p, None).unwrap();
    let g = adjoint_gradient(&prob, &x, &p).unwrap();
    let fd = common::central_gradient(&p, 1e-5, |q| {
        let xq = prob.solve_equilibrium(q, Some(&x)).unwrap();
        prob.objective(&xq, q)
    });
    assert!(common::rel(&g, &fd) <= 1e-3, "{}", common::rel(&g, &fd));
}

fn check_jacobians<P: EquilibriumProblem>(name: &str, prob: &P, x: &[f64], p: &[f64], tol: f64) {
    let jac = prob.constraint_jacobians(x, p);
    let fd_x = common::central_jacobian(x, 1e-6, |xq| prob.constraints(xq, p));
    let fd_p = common::central_jacobian(p, 1e-6, |pq| prob.constraints(x, pq));
    let ex = common::max_abs_diff(&jac.dcdx.to_dense(), &fd_x);
    let ep = common::max_abs_diff(&jac.dcdp.to_dense(), &fd_p);
    assert!(ex <= tol && ep <= tol, "{name}: {ex} {ep}");

    let (fx, fp) = prob.objective_gradient(x, p);
    let gx = common::central_gradient(x, 1e-6, |xq| prob.objective(xq, p));
    let gp = common::central_gradient(p, 1e-6, |pq| prob.objective(x, pq));
    assert!(
        common::rel(&fx, &gx) <= 1e-6 || common::norm(&fx) <= 1e-8,
        "{name}"
    );
    assert!(
        common::rel(&fp, &gp) <= 1e-6 || common::norm(&fp) <= 1e-8,
        "{name}"
    );
}

fn check_least_squares<P: EquilibriumProblem>(name: &str, prob: &P, x: &[f64], p: &[f64]) {
    let ls = prob.residuals(x, p).unwrap();
    let value: f64 = ls.r.iter().zip(&ls.w).map(|(r, w)| 0.5 * w * r * r).sum();
    let f = prob.objective(x, p);
    assert!(
        (value - f).abs() <= 1e-12 * (1.0 + f.abs()),
        "{name}: {value} vs {f}"
    );
    let jx = common::central_jacobian(x, 1e-6, |xq| prob.residuals(xq, p).unwrap().r);
    let jp = common::central_jacobian(p, 1e-6, |pq| prob.residuals(x, pq).unwrap().r);
    assert!(
        common::max_abs_diff(&ls.drdx.to_dense(), &jx) <= 1e-6,
        "{name}"
    );
    assert!(
        common::max_abs_diff(&ls.drdp.to_dense(), &jp) <= 1e-6,
        "{name}"
    );
}

#[test]
fn analytic_derivatives_match_differences_on_every_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..3 {
        let car = CarControlProblem::new(CarConfig {
            n_steps: 6,
            ..Default::default()
        });
        let p: Vec<f64> = (0..6)
            .flat_map(|_| [rng.random_range(0.2..1.2), rng.random_range(-0.5..0.5)])
            .collect();
        let x: Vec<f64> = car
            .solve_equilibrium(&p, None)
            .unwrap()
            .iter()
            .map(|v| v + 0.01 * rng.random_range(-1.0..1.0))
            .collect();
        check_jacobians("car", &car, &x, &p, 1e-6);
        check_least_squares("car", &car, &x, &p);

        let bar = SpringBarProblem::new(SpringBarConfig {
            nw: 5,
            nh: 2,
            w_r: 1e-2,
            ..Default::default()
        });
        let p: Vec<f64> = bar
            .initial_parameters()
            .iter()
            .map(|v| v + 0.02 * rng.random_range(-1.0..1.0))
            .collect();
        let x: Vec<f64> = p
            .iter()
            .map(|v| v + 0.02 * rng.random_range(-1.0..1.0))
            .collect();
        check_jacobians(
            "spring bar",
            &bar,
            &x,
            &p,
            1e-4 * bar.stiffness.max(1.0).sqrt(),
        );
        check_least_squares("spring bar", &bar, &x, &p);

        let cl = cloth(3, 3);
        let p: Vec<f64> = cl
            .initial_parameters()
            .iter()
            .map(|v| v + 0.05 * rng.random_range(-1.0..1.0))
            .collect();
        let x: Vec<f64> = cl
            .solve_equilibrium(&p, None)
            .unwrap()
            .iter()
            .map(|v| v + 0.01 * rng.random_range(-1.0..1.0))
            .collect();
        check_jacobians("cloth", &cl, &x, &p, 1e-3);
        check_least_squares("cloth", &cl, &x, &p);
    }
}

#[test]
fn cloth_rollout_satisfies_its_constraints() {
    let prob = cloth(4, 6);
    let p = prob.initial_parameters();
    let x = prob.solve_equilibrium(&p, None).unwrap();
    assert_eq!((prob.n_x(), prob.n_p()), (3 * 16 * 6, 36));
    let c = prob.constraints(&x, &p);
    assert!(common::norm(&c) <= 1e-6, "{}", common::norm(&c));
}
