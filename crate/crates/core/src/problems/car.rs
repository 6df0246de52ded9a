//! Steering a kinematic car to a goal pose.
//!
//! States are the poses after each of `N` explicit Euler steps (`n_x = 3N`),
//! parameters the per-step speed and steering angle (`n_p = 2N`). The
//! objective penalizes the final pose error, the final heading vector
//! `d = (cos theta, sin theta)` and control rates.

use crate::sensitivity::{ConstraintJacobians, EquilibriumProblem, GnBlocks, LeastSquares};
use crate::sim::{rollout_explicit, CarDynamics, SimError};
use crate::sparse::{CscMatrix, TripletMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CarConfig {
    pub n_steps: usize,
    pub h: f64,
    pub start: [f64; 3],
    /// goal `(px, py, theta)`
    pub target: [f64; 3],
    pub w_pos: f64,
    pub w_dir: f64,
    pub w_smooth: f64,
    pub v_max: f64,
    pub s_max: f64,
    pub initial_speed: f64,
}

impl Default for CarConfig {
    fn default() -> Self {
        Self {
            n_steps: 500,
            h: 1.0 / 30.0,
            start: [0.0, 0.0, 0.0],
            target: [6.0, 4.0, std::f64::consts::FRAC_PI_2],
            w_pos: 1.0,
            w_dir: 0.1,
            w_smooth: 1e-2,
            v_max: 1.5,
            s_max: 0.6,
            initial_speed: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CarControlProblem {
    pub config: CarConfig,
    pub dynamics: CarDynamics,
}

impl CarControlProblem {
    pub fn new(config: CarConfig) -> Self {
        assert!(config.n_steps >= 1, "car problem needs at least one step");
        Self {
            dynamics: CarDynamics { h: config.h },
            config,
        }
    }

    fn n(&self) -> usize {
        self.config.n_steps
    }

    fn final_state<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[3 * (self.n() - 1)..3 * self.n()]
    }

    /// Euclidean distance between the final and target positions.
    pub fn final_position_error(&self, x: &[f64]) -> f64 {
        let xn = self.final_state(x);
        let t = self.config.target;
        ((xn[0] - t[0]).powi(2) + (xn[1] - t[1]).powi(2)).sqrt()
    }

    fn n_smooth(&self) -> usize {
        2 * (self.n() - 1)
    }
}

impl EquilibriumProblem for CarControlProblem {
    fn n_x(&self) -> usize {
        3 * self.n()
    }

    fn n_p(&self) -> usize {
        2 * self.n()
    }

    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        self.dynamics.constraints(&self.config.start, x, p)
    }

    fn constraint_jacobians(&self, x: &[f64], p: &[f64]) -> ConstraintJacobians {
        let (dcdx, dcdp) = self.dynamics.jacobians(&self.config.start, x, p);
        ConstraintJacobians { dcdx, dcdp }
    }

    fn objective(&self, x: &[f64], p: &[f64]) -> f64 {
        self.residuals(x, p).expect("least squares").value()
    }

    fn objective_gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ls = self.residuals(x, p).expect("least squares");
        let wr: Vec<f64> = ls.r.iter().zip(&ls.w).map(|(r, w)| r * w).collect();
        (
            ls.drdx.spmv_transpose(&wr).expect("dims"),
            ls.drdp.spmv_transpose(&wr).expect("dims"),
        )
    }

    fn residuals(&self, x: &[f64], p: &[f64]) -> Option<LeastSquares> {
        let cfg = &self.config;
        let n = self.n();
        let xn = self.final_state(x);
        let last = 3 * (n - 1);
        let m = 5 + self.n_smooth();
        let mut r = Vec::with_capacity(m);
        let mut w = Vec::with_capacity(m);
        let mut drdx = TripletMatrix::new(m, 3 * n);
        let mut drdp = TripletMatrix::with_capacity(m, 2 * n, 2 * self.n_smooth());
        for k in 0..3 {
            r.push(xn[k] - cfg.target[k]);
            w.push(cfg.w_pos);
            drdx.push(k, last + k, 1.0);
        }
        let (s, c) = xn[2].sin_cos();
        let (st, ct) = cfg.target[2].sin_cos();
        r.push(c - ct);
        r.push(s - st);
        w.extend([cfg.w_dir, cfg.w_dir]);
        drdx.push(3, last + 2, -s);
        drdx.push(4, last + 2, c);
        // control rates (p^i - p^{i-1}) / h
        let inv_h = 1.0 / cfg.h;
        for i in 1..n {
            for k in 0..2 {
                let row = 5 + 2 * (i - 1) + k;
                r.push((p[2 * i + k] - p[2 * (i - 1) + k]) * inv_h);
                w.push(cfg.w_smooth);
                drdp.push(row, 2 * i + k, inv_h);
                drdp.push(row, 2 * (i - 1) + k, -inv_h);
            }
        }
        Some(LeastSquares {
            r,
            w,
            drdx: drdx.to_csc().expect("in-bounds"),
            drdp: drdp.to_csc().expect("in-bounds"),
        })
    }

    fn objective_hessian(&self, x: &[f64], p: &[f64]) -> Option<GnBlocks> {
        let ls = self.residuals(x, p)?;
        let mut a = ls.drdx.transpose_weighted_mul(&ls.w, &ls.drdx).ok()?;
        // heading term w_dir (1 - cos(theta - theta*)) has curvature w_dir cos(theta - theta*);
        // the Gauss-Newton part above contributes w_dir, add the difference
        let it = 3 * (self.n() - 1) + 2;
        let dtheta = self.final_state(x)[2] - self.config.target[2];
        let extra = self.config.w_dir * (dtheta.cos() - 1.0);
        let mut diag = vec![0.0; 3 * self.n()];
        diag[it] = extra;
        a = a.add_diagonal(&diag).ok()?;
        Some(GnBlocks {
            a,
            b: CscMatrix::zeros(2 * self.n(), 3 * self.n()),
            c: ls.drdp.transpose_weighted_mul(&ls.w, &ls.drdp).ok()?,
        })
    }

    fn constraint_curvature(&self, x: &[f64], p: &[f64], lambda: &[f64]) -> Option<GnBlocks> {
        let (a, b, c) = self.dynamics.curvature(&self.config.start, x, p, lambda);
        Some(GnBlocks { a, b, c })
    }

    fn solve_equilibrium(&self, p: &[f64], _guess: Option<&[f64]>) -> Result<Vec<f64>, SimError> {
        Ok(rollout_explicit(&self.dynamics, &self.config.start, p)?.states)
    }

    fn initial_parameters(&self) -> Vec<f64> {
        let v = self
            .config
            .initial_speed
            .clamp(-self.config.v_max, self.config.v_max);
        [v, 0.0].repeat(self.n())
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let (v, s) = (self.config.v_max, self.config.s_max);
        Some(([-v, -s].repeat(self.n()), [v, s].repeat(self.n())))
    }
}
