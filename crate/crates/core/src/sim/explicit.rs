//! Kinematic car `d/dt (px, py, theta) = (v cos theta, v sin theta, v tan s)`
//! with controls `(v, s)` per step, integrated by explicit Euler.

use super::{Integrator, Rollout, SimError};
use crate::sparse::{CscMatrix, TripletMatrix};

/// Any state component above this magnitude counts as a blowup.
pub const BLOWUP_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarDynamics {
    pub h: f64,
}

impl Default for CarDynamics {
    fn default() -> Self {
        Self { h: 1.0 / 30.0 }
    }
}

impl CarDynamics {
    pub fn velocity(&self, state: &[f64], control: &[f64]) -> [f64; 3] {
        let (theta, v, s) = (state[2], control[0], control[1]);
        [v * theta.cos(), v * theta.sin(), v * s.tan()]
    }

    /// Euler update `x + h xdot(x, u)`.
    pub fn step(&self, state: &[f64], control: &[f64]) -> [f64; 3] {
        let f = self.velocity(state, control);
        [
            state[0] + self.h * f[0],
            state[1] + self.h * f[1],
            state[2] + self.h * f[2],
        ]
    }

    fn prev<'a>(x0: &'a [f64], states: &'a [f64], i: usize) -> &'a [f64] {
        if i == 0 {
            x0
        } else {
            &states[3 * (i - 1)..3 * i]
        }
    }

    /// Stacked `c^i = x^i - x^{i-1} - h xdot(x^{i-1}, u^i)` for `i = 1..N`
    /// (0-based block `i` here is step `i + 1`).
    pub fn constraints(&self, x0: &[f64], states: &[f64], controls: &[f64]) -> Vec<f64> {
        let n = controls.len() / 2;
        let mut c = Vec::with_capacity(3 * n);
        for i in 0..n {
            let next = self.step(Self::prev(x0, states, i), &controls[2 * i..2 * i + 2]);
            for k in 0..3 {
                c.push(states[3 * i + k] - next[k]);
            }
        }
        c
    }

    /// `(dc/dx, dc/dp)`: identity diagonal blocks, `-(I + h dxdot/dx)`
    /// sub-diagonal blocks and block-diagonal `-h dxdot/du`.
    pub fn jacobians(
        &self,
        x0: &[f64],
        states: &[f64],
        controls: &[f64],
    ) -> (CscMatrix, CscMatrix) {
        let n = controls.len() / 2;
        let h = self.h;
        let mut jx = TripletMatrix::with_capacity(3 * n, 3 * n, 3 * n + 5 * n);
        let mut jp = TripletMatrix::with_capacity(3 * n, 2 * n, 4 * n);
        for i in 0..n {
            let r = 3 * i;
            for k in 0..3 {
                jx.push(r + k, r + k, 1.0);
            }
            let xp = Self::prev(x0, states, i);
            let (theta, v, s) = (xp[2], controls[2 * i], controls[2 * i + 1]);
            if i > 0 {
                let q = 3 * (i - 1);
                for k in 0..3 {
                    jx.push(r + k, q + k, -1.0);
                }
                jx.push(r, q + 2, h * v * theta.sin());
                jx.push(r + 1, q + 2, -h * v * theta.cos());
            }
            let sec2 = 1.0 / s.cos().powi(2);
            let cidx = 2 * i;
            jp.push(r, cidx, -h * theta.cos());
            jp.push(r + 1, cidx, -h * theta.sin());
            jp.push(r + 2, cidx, -h * s.tan());
            jp.push(r + 2, cidx + 1, -h * v * sec2);
        }
        (
            jx.to_csc().expect("in-bounds car jacobian"),
            jp.to_csc().expect("in-bounds car jacobian"),
        )
    }

    /// `sum_i lambda_i d2c_i` as blocks `(xx, px, pp)`.
    pub fn curvature(
        &self,
        x0: &[f64],
        states: &[f64],
        controls: &[f64],
        lambda: &[f64],
    ) -> (CscMatrix, CscMatrix, CscMatrix) {
        let n = controls.len() / 2;
        let h = self.h;
        let mut xx = TripletMatrix::new(3 * n, 3 * n);
        let mut px = TripletMatrix::new(2 * n, 3 * n);
        let mut pp = TripletMatrix::new(2 * n, 2 * n);
        for i in 0..n {
            let l = &lambda[3 * i..3 * i + 3];
            let xp = Self::prev(x0, states, i);
            let (theta, v, s) = (xp[2], controls[2 * i], controls[2 * i + 1]);
            let (st, ct) = theta.sin_cos();
            let sec2 = 1.0 / s.cos().powi(2);
            let (iv, is) = (2 * i, 2 * i + 1);
            // c = ... - h (v cos, v sin, v tan s)
            if i > 0 {
                let it = 3 * (i - 1) + 2;
                xx.push(it, it, -h * (l[0] * (-v * ct) + l[1] * (-v * st)));
                px.push(iv, it, -h * (l[0] * (-st) + l[1] * ct));
            }
            pp.push(iv, is, -h * l[2] * sec2);
            pp.push(is, iv, -h * l[2] * sec2);
            pp.push(is, is, -h * l[2] * 2.0 * v * sec2 * s.tan());
        }
        (
            xx.to_csc().expect("in-bounds"),
            px.to_csc().expect("in-bounds"),
            pp.to_csc().expect("in-bounds"),
        )
    }
}

/// Integrates `N = controls.len() / 2` explicit Euler steps from `x0`.
pub fn rollout_explicit(
    dynamics: &CarDynamics,
    x0: &[f64],
    controls: &[f64],
) -> Result<Rollout, SimError> {
    if x0.len() != 3 || !controls.len().is_multiple_of(2) || controls.is_empty() {
        return Err(SimError::InvalidInput(format!(
            "car rollout needs a 3-vector start and 2N controls, got {} and {}",
            x0.len(),
            controls.len()
        )));
    }
    if !(dynamics.h > 0.0) {
        return Err(SimError::InvalidInput(format!("step size {}", dynamics.h)));
    }
    let n = controls.len() / 2;
    let mut states = Vec::with_capacity(3 * n);
    let mut cur = [x0[0], x0[1], x0[2]];
    for i in 0..n {
        cur = dynamics.step(&cur, &controls[2 * i..2 * i + 2]);
        if cur.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_LIMIT) {
            return Err(SimError::NumericalBlowup { step: i + 1 });
        }
        states.extend_from_slice(&cur);
    }
    Ok(Rollout {
        integrator: Integrator::Explicit,
        h: dynamics.h,
        n_steps: n,
        state_dim: 3,
        control_dim: 2,
        initial: x0.to_vec(),
        states,
        controls: controls.to_vec(),
    })
}
