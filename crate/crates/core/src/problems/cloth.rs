//! Keyframe control of a hanging cloth through two corner handles.
//!
//! States are the vertex positions of all `N` implicit Euler steps
//! (`n_x = 3 V N`), parameters the two handle positions per step
//! (`n_p = 6N`). Keyframe targets come from a reference rollout in which
//! the handles translate by `target_offset` over the horizon.

use crate::sensitivity::{ConstraintJacobians, EquilibriumProblem, GnBlocks, LeastSquares};
use crate::sim::{rollout_implicit, ClothModel, SimError};
use crate::sparse::TripletMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ClothConfig {
    pub side: usize,
    pub n_steps: usize,
    pub total_time: f64,
    pub size: f64,
    pub stiffness: f64,
    pub mass: f64,
    /// out-of-plane bend of the initial sheet, as a fraction of `size`
    pub curl: f64,
    /// 1-based step indices with target states
    pub keyframes: Vec<usize>,
    pub target_offset: [f64; 3],
    pub w_handle_deviation: f64,
    pub w_handle_velocity: f64,
    pub w_cloth_velocity: f64,
}

impl Default for ClothConfig {
    fn default() -> Self {
        Self {
            side: 5,
            n_steps: 20,
            total_time: 1.66,
            size: 1.0,
            stiffness: 1e3,
            mass: 1.0,
            curl: 0.1,
            keyframes: Vec::new(),
            target_offset: [0.3, 0.2, 0.25],
            w_handle_deviation: 1e-2,
            w_handle_velocity: 1e-2,
            w_cloth_velocity: 1e-2,
        }
    }
}

impl ClothConfig {
    /// Keyframes actually used: the configured ones, or `{N/2, N}`.
    pub fn effective_keyframes(&self) -> Vec<usize> {
        if self.keyframes.is_empty() {
            let mut k = vec![(self.n_steps / 2).max(1), self.n_steps];
            k.dedup();
            k
        } else {
            self.keyframes.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClothControlProblem {
    pub config: ClothConfig,
    pub model: ClothModel,
    pub keyframes: Vec<usize>,
    /// one target state per keyframe
    pub targets: Vec<Vec<f64>>,
    rest: [f64; 6],
}

impl ClothControlProblem {
    pub fn new(config: ClothConfig) -> Result<Self, SimError> {
        if config.side < 2 || config.n_steps < 2 {
            return Err(SimError::InvalidInput(format!(
                "cloth needs side >= 2 and N >= 2, got {} and {}",
                config.side, config.n_steps
            )));
        }
        let keyframes = config.effective_keyframes();
        if let Some(&k) = keyframes.iter().find(|&&k| k == 0 || k > config.n_steps) {
            return Err(SimError::InvalidInput(format!(
                "keyframe {k} outside 1..={}",
                config.n_steps
            )));
        }
        let h = config.total_time / config.n_steps as f64;
        let model =
            ClothModel::hanging_sheet(config.side, config.size, config.stiffness, config.mass, h)
                .with_curl(config.curl * config.size);
        let rest = model.rest_controls();
        let n = config.n_steps;
        let reference: Vec<f64> = (1..=n)
            .flat_map(|i| {
                let t = i as f64 / n as f64;
                (0..6).map(move |k| rest[k] + t * config.target_offset[k % 3])
            })
            .collect();
        let roll = rollout_implicit(&model, &reference, None)?;
        let targets = keyframes.iter().map(|&k| roll.state(k).to_vec()).collect();
        Ok(Self {
            config,
            model,
            keyframes,
            targets,
            rest,
        })
    }

    /// Uses the given states as keyframe targets instead of the reference motion.
    pub fn with_targets(mut self, targets: Vec<Vec<f64>>) -> Self {
        assert_eq!(targets.len(), self.keyframes.len());
        self.targets = targets;
        self
    }

    fn n(&self) -> usize {
        self.config.n_steps
    }

    fn sd(&self) -> usize {
        self.model.state_dim()
    }

    /// Keyframe term `1/2 sum |x^j - target^j|^2` alone.
    pub fn keyframe_error(&self, x: &[f64]) -> f64 {
        let sd = self.sd();
        self.keyframes
            .iter()
            .zip(&self.targets)
            .map(|(&k, t)| {
                x[(k - 1) * sd..k * sd]
                    .iter()
                    .zip(t)
                    .map(|(a, b)| 0.5 * (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }
}

impl EquilibriumProblem for ClothControlProblem {
    fn n_x(&self) -> usize {
        self.sd() * self.n()
    }

    fn n_p(&self) -> usize {
        6 * self.n()
    }

    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        self.model.constraints(x, p)
    }

    fn constraint_jacobians(&self, x: &[f64], p: &[f64]) -> ConstraintJacobians {
        let (dcdx, dcdp) = self.model.jacobians(x, p);
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
        let (n, sd) = (self.n(), self.sd());
        let inv_h = 1.0 / self.model.h;
        let m = self.keyframes.len() * sd + 12 * n + sd * n;
        let (n_x, n_p) = (self.n_x(), self.n_p());
        let mut r = Vec::with_capacity(m);
        let mut w = Vec::with_capacity(m);
        let mut drdx = TripletMatrix::with_capacity(m, n_x, self.keyframes.len() * sd + 2 * sd * n);
        let mut drdp = TripletMatrix::with_capacity(m, n_p, 18 * n);
        for (&k, t) in self.keyframes.iter().zip(&self.targets) {
            for (j, tj) in t.iter().enumerate() {
                let col = (k - 1) * sd + j;
                drdx.push(r.len(), col, 1.0);
                r.push(x[col] - tj);
                w.push(1.0);
            }
        }
        for i in 0..n {
            for k in 0..6 {
                drdp.push(r.len(), 6 * i + k, 1.0);
                r.push(p[6 * i + k] - self.rest[k]);
                w.push(cfg.w_handle_deviation);
            }
        }
        for i in 0..n {
            for k in 0..6 {
                let prev = if i == 0 {
                    self.rest[k]
                } else {
                    p[6 * (i - 1) + k]
                };
                drdp.push(r.len(), 6 * i + k, inv_h);
                if i > 0 {
                    drdp.push(r.len(), 6 * (i - 1) + k, -inv_h);
                }
                r.push((p[6 * i + k] - prev) * inv_h);
                w.push(cfg.w_handle_velocity);
            }
        }
        for i in 0..n {
            for j in 0..sd {
                let prev = if i == 0 {
                    self.model.x0[j]
                } else {
                    x[(i - 1) * sd + j]
                };
                drdx.push(r.len(), i * sd + j, inv_h);
                if i > 0 {
                    drdx.push(r.len(), (i - 1) * sd + j, -inv_h);
                }
                r.push((x[i * sd + j] - prev) * inv_h);
                w.push(cfg.w_cloth_velocity);
            }
        }
        Some(LeastSquares {
            r,
            w,
            drdx: drdx.to_csc().expect("in-bounds"),
            drdp: drdp.to_csc().expect("in-bounds"),
        })
    }

    /// All residuals are affine, so the objective Hessian is the Gauss-Newton matrix.
    fn objective_hessian(&self, x: &[f64], p: &[f64]) -> Option<GnBlocks> {
        let ls = self.residuals(x, p)?;
        Some(GnBlocks {
            a: ls.drdx.transpose_weighted_mul(&ls.w, &ls.drdx).ok()?,
            b: ls.drdp.transpose_weighted_mul(&ls.w, &ls.drdx).ok()?,
            c: ls.drdp.transpose_weighted_mul(&ls.w, &ls.drdp).ok()?,
        })
    }

    fn solve_equilibrium(&self, p: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>, SimError> {
        Ok(rollout_implicit(&self.model, p, guess)?.states)
    }

    fn initial_parameters(&self) -> Vec<f64> {
        self.rest.repeat(self.n())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_dimensions() {
        // 10 x 10 = 100 vertices: 300N states, 6N controls
        let cfg = ClothConfig {
            side: 10,
            n_steps: 3,
            ..Default::default()
        };
        let model = ClothModel::hanging_sheet(10, 1.0, 1e3, 1.0, 0.1);
        assert_eq!(model.state_dim() * cfg.n_steps, 300 * 3);
    }

    #[test]
    fn keyframe_term_vanishes_on_uncontrolled_targets() {
        let base = ClothControlProblem::new(ClothConfig {
            side: 3,
            n_steps: 4,
            ..Default::default()
        })
        .unwrap();
        let p = base.initial_parameters();
        let x = base.solve_equilibrium(&p, None).unwrap();
        let targets = base
            .keyframes
            .iter()
            .map(|&k| x[(k - 1) * base.sd()..k * base.sd()].to_vec())
            .collect();
        let prob = base.with_targets(targets);
        assert_eq!(prob.keyframe_error(&x), 0.0);
        // handle deviation and handle velocity vanish too; only cloth velocity remains
        let ls = prob.residuals(&x, &p).unwrap();
        let sd = prob.sd();
        let kf = prob.keyframes.len() * sd;
        assert!(ls.r[..kf + 12 * 4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_keyframe_rejected() {
        let err = ClothControlProblem::new(ClothConfig {
            side: 2,
            n_steps: 3,
            keyframes: vec![4],
            ..Default::default()
        });
        assert!(matches!(err, Err(SimError::InvalidInput(_))));
    }
}
