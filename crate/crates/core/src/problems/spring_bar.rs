//! Rest-shape design for a clamped mass-spring bar.
//!
//! A 2D `nw x nh` lattice (structural and shear springs) is clamped at its
//! left column and sags under gravity. The parameters are the rest positions
//! of every free vertex; the objective asks the equilibrium to match the
//! straight bar. With `w_r > 0` a regularizer penalizes rest-length changes.

use crate::dense::DenseMatrix;
use crate::sensitivity::{ConstraintJacobians, EquilibriumProblem, GnBlocks, LeastSquares};
use crate::sim::{solve_static, spring_terms, EnergyModel, SimError, StaticConfig};
use crate::sparse::{CscMatrix, TripletMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SpringBarConfig {
    pub nw: usize,
    pub nh: usize,
    /// bar length; the height follows from the square lattice spacing
    pub length: f64,
    /// spring stiffness; `None` picks a value giving roughly 20% tip sag
    pub stiffness: Option<f64>,
    pub total_mass: f64,
    pub gravity: f64,
    pub w_r: f64,
}

impl Default for SpringBarConfig {
    fn default() -> Self {
        Self {
            nw: 16,
            nh: 4,
            length: 1.0,
            stiffness: None,
            total_mass: 1.0,
            gravity: 9.81,
            w_r: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct BarSpring {
    a: usize,
    b: usize,
    /// rest length at construction, used by the regularizer
    rest0: f64,
}

/// Endpoint of a spring: a free vertex (index into the free list) or a clamped position.
#[derive(Debug, Clone, Copy)]
enum End {
    Free(usize),
    Clamped([f64; 2]),
}

#[derive(Debug, Clone)]
pub struct SpringBarProblem {
    pub config: SpringBarConfig,
    pub stiffness: f64,
    pub vertex_mass: f64,
    /// full vertex -> free index
    free_index: Vec<Option<usize>>,
    /// all vertex positions of the undeformed lattice
    grid: Vec<[f64; 2]>,
    springs: Vec<BarSpring>,
    pub x_target: Vec<f64>,
    pub static_config: StaticConfig,
}

impl SpringBarProblem {
    pub fn new(config: SpringBarConfig) -> Self {
        assert!(
            config.nw >= 2 && config.nh >= 2,
            "spring bar needs at least a 2x2 lattice"
        );
        let (nw, nh) = (config.nw, config.nh);
        let a = config.length / (nw - 1) as f64;
        let height = a * (nh - 1) as f64;
        let grid: Vec<[f64; 2]> = (0..nw * nh)
            .map(|v| [(v % nw) as f64 * a, (v / nw) as f64 * a])
            .collect();
        let mut free_index = vec![None; nw * nh];
        let mut n_free = 0;
        for (v, slot) in free_index.iter_mut().enumerate() {
            if v % nw != 0 {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        let flat: Vec<f64> = grid.iter().flatten().copied().collect();
        let springs = crate::sim::SpringNetwork::lattice(nw, nh, 2, &flat, 1.0)
            .springs
            .into_iter()
            .filter(|s| free_index[s.a].is_some() || free_index[s.b].is_some())
            .map(|s| BarSpring {
                a: s.a,
                b: s.b,
                rest0: s.rest,
            })
            .collect();
        // cantilever estimate: tip sag = q L^4 / (8 E I) with E ~ k, I = H^3/12
        let q = config.total_mass * config.gravity / config.length;
        let stiffness = config.stiffness.unwrap_or_else(|| {
            0.3 * q * config.length.powi(4) / (0.1 * config.length * height.powi(3))
        });
        let x_target: Vec<f64> = (0..nw * nh)
            .filter(|v| free_index[*v].is_some())
            .flat_map(|v| grid[v])
            .collect();
        Self {
            vertex_mass: config.total_mass / (nw * nh) as f64,
            config,
            stiffness,
            free_index,
            grid,
            springs,
            x_target,
            static_config: StaticConfig::default(),
        }
    }

    pub fn n_free(&self) -> usize {
        self.x_target.len() / 2
    }

    fn end(&self, v: usize) -> End {
        match self.free_index[v] {
            Some(f) => End::Free(f),
            None => End::Clamped(self.grid[v]),
        }
    }

    fn pos(&self, e: End, coords: &[f64]) -> [f64; 2] {
        match e {
            End::Free(f) => [coords[2 * f], coords[2 * f + 1]],
            End::Clamped(c) => c,
        }
    }

    /// Rest length and its unit direction `(P_a - P_b) / L`.
    fn rest_length(&self, s: &BarSpring, p: &[f64]) -> (f64, [f64; 2]) {
        let pa = self.pos(self.end(s.a), p);
        let pb = self.pos(self.end(s.b), p);
        let d = [pa[0] - pb[0], pa[1] - pb[1]];
        let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
        (l, [d[0] / l, d[1] / l])
    }

    fn energy_model(&self) -> BarEnergy<'_> {
        BarEnergy { bar: self }
    }

    /// Tip deflection of the bottom-right vertex at equilibrium for `p`.
    pub fn tip_sag(&self, x: &[f64]) -> f64 {
        let f = self.free_index[self.config.nw - 1].expect("right column is free");
        self.x_target[2 * f + 1] - x[2 * f + 1]
    }

    fn free_ends(&self, s: &BarSpring) -> (Option<usize>, Option<usize>) {
        (self.free_index[s.a], self.free_index[s.b])
    }
}

struct BarEnergy<'a> {
    bar: &'a SpringBarProblem,
}

impl EnergyModel for BarEnergy<'_> {
    fn dim(&self) -> usize {
        2 * self.bar.n_free()
    }

    fn energy(&self, x: &[f64], p: &[f64]) -> f64 {
        let b = self.bar;
        let mut e = 0.0;
        for s in &b.springs {
            let (l, _) = b.rest_length(s, p);
            let xa = b.pos(b.end(s.a), x);
            let xb = b.pos(b.end(s.b), x);
            e += spring_terms(&xa, &xb, b.stiffness, l).0;
        }
        for f in 0..b.n_free() {
            e += b.vertex_mass * b.config.gravity * x[2 * f + 1];
        }
        e
    }

    fn gradient(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let b = self.bar;
        let mut g = vec![0.0; x.len()];
        for s in &b.springs {
            let (l, _) = b.rest_length(s, p);
            let xa = b.pos(b.end(s.a), x);
            let xb = b.pos(b.end(s.b), x);
            let (_, ga, _) = spring_terms(&xa, &xb, b.stiffness, l);
            let (fa, fb) = b.free_ends(s);
            for k in 0..2 {
                if let Some(fa) = fa {
                    g[2 * fa + k] += ga[k];
                }
                if let Some(fb) = fb {
                    g[2 * fb + k] -= ga[k];
                }
            }
        }
        for f in 0..b.n_free() {
            g[2 * f + 1] += b.vertex_mass * b.config.gravity;
        }
        g
    }

    fn hessian(&self, x: &[f64], p: &[f64]) -> CscMatrix {
        let b = self.bar;
        let n = x.len();
        let mut t = TripletMatrix::with_capacity(n, n, 16 * b.springs.len());
        for s in &b.springs {
            let (l, _) = b.rest_length(s, p);
            let xa = b.pos(b.end(s.a), x);
            let xb = b.pos(b.end(s.b), x);
            let (_, _, h) = spring_terms(&xa, &xb, b.stiffness, l);
            let (fa, fb) = b.free_ends(s);
            for r in 0..2 {
                for c in 0..2 {
                    let v = h[(r, c)];
                    if let Some(fa) = fa {
                        t.push(2 * fa + r, 2 * fa + c, v);
                    }
                    if let Some(fb) = fb {
                        t.push(2 * fb + r, 2 * fb + c, v);
                    }
                    if let (Some(fa), Some(fb)) = (fa, fb) {
                        t.push(2 * fa + r, 2 * fb + c, -v);
                        t.push(2 * fb + r, 2 * fa + c, -v);
                    }
                }
            }
        }
        t.to_csc().expect("in-bounds bar stiffness")
    }
}

impl EquilibriumProblem for SpringBarProblem {
    fn n_x(&self) -> usize {
        2 * self.n_free()
    }

    fn n_p(&self) -> usize {
        2 * self.n_free()
    }

    /// Net force per free coordinate divided by the spring stiffness.
    fn constraints(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let inv_k = 1.0 / self.stiffness;
        self.energy_model()
            .gradient(x, p)
            .into_iter()
            .map(|v| v * inv_k)
            .collect()
    }

    fn constraint_jacobians(&self, x: &[f64], p: &[f64]) -> ConstraintJacobians {
        let mut dcdx = self.energy_model().hessian(x, p);
        dcdx.scale(1.0 / self.stiffness);
        let n = self.n_x();
        let mut t = TripletMatrix::with_capacity(n, n, 16 * self.springs.len());
        for s in &self.springs {
            let (_, e) = self.rest_length(s, p);
            let xa = self.pos(self.end(s.a), x);
            let xb = self.pos(self.end(s.b), x);
            let d = [xa[0] - xb[0], xa[1] - xb[1]];
            let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let u = [d[0] / l, d[1] / l];
            // d(grad_a)/dL / k = -u,  dL/dp_a = e,  dL/dp_b = -e
            let (fa, fb) = self.free_ends(s);
            for r in 0..2 {
                for c in 0..2 {
                    let v = -u[r] * e[c];
                    if let Some(fa) = fa {
                        t.push(2 * fa + r, 2 * fa + c, v);
                        if let Some(fb) = fb {
                            t.push(2 * fa + r, 2 * fb + c, -v);
                        }
                    }
                    if let Some(fb) = fb {
                        t.push(2 * fb + r, 2 * fb + c, v);
                        if let Some(fa) = fa {
                            t.push(2 * fb + r, 2 * fa + c, -v);
                        }
                    }
                }
            }
        }
        ConstraintJacobians {
            dcdx,
            dcdp: t.to_csc().expect("in-bounds bar jacobian"),
        }
    }

    fn objective(&self, x: &[f64], p: &[f64]) -> f64 {
        let n = self.n_x() as f64;
        let shape: f64 = x
            .iter()
            .zip(&self.x_target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / (2.0 * n);
        let reg: f64 = if self.config.w_r > 0.0 {
            self.springs
                .iter()
                .map(|s| (self.rest_length(s, p).0 - s.rest0).powi(2))
                .sum::<f64>()
                * 0.5
                * self.config.w_r
        } else {
            0.0
        };
        shape + reg
    }

    fn objective_gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_x() as f64;
        let fx = x
            .iter()
            .zip(&self.x_target)
            .map(|(a, b)| (a - b) / n)
            .collect();
        let mut fp = vec![0.0; self.n_p()];
        if self.config.w_r > 0.0 {
            for s in &self.springs {
                let (l, e) = self.rest_length(s, p);
                let coef = self.config.w_r * (l - s.rest0);
                let (fa, fb) = self.free_ends(s);
                for k in 0..2 {
                    if let Some(fa) = fa {
                        fp[2 * fa + k] += coef * e[k];
                    }
                    if let Some(fb) = fb {
                        fp[2 * fb + k] -= coef * e[k];
                    }
                }
            }
        }
        (fx, fp)
    }

    fn residuals(&self, x: &[f64], p: &[f64]) -> Option<LeastSquares> {
        let n = self.n_x();
        let with_reg = self.config.w_r > 0.0;
        let m = n + if with_reg { self.springs.len() } else { 0 };
        let mut r: Vec<f64> = x.iter().zip(&self.x_target).map(|(a, b)| a - b).collect();
        let mut w = vec![1.0 / n as f64; n];
        let mut drdx = TripletMatrix::with_capacity(m, n, n);
        for i in 0..n {
            drdx.push(i, i, 1.0);
        }
        let mut drdp = TripletMatrix::new(m, n);
        if with_reg {
            for (k, s) in self.springs.iter().enumerate() {
                let (l, e) = self.rest_length(s, p);
                r.push(l - s.rest0);
                w.push(self.config.w_r);
                let (fa, fb) = self.free_ends(s);
                for c in 0..2 {
                    if let Some(fa) = fa {
                        drdp.push(n + k, 2 * fa + c, e[c]);
                    }
                    if let Some(fb) = fb {
                        drdp.push(n + k, 2 * fb + c, -e[c]);
                    }
                }
            }
        }
        Some(LeastSquares {
            r,
            w,
            drdx: drdx.to_csc().expect("in-bounds"),
            drdp: drdp.to_csc().expect("in-bounds"),
        })
    }

    fn objective_hessian(&self, _x: &[f64], p: &[f64]) -> Option<GnBlocks> {
        let n = self.n_x();
        let a = CscMatrix::from_diagonal(&vec![1.0 / n as f64; n]);
        let mut c = TripletMatrix::new(n, n);
        if self.config.w_r > 0.0 {
            let w = self.config.w_r;
            for s in &self.springs {
                let (l, e) = self.rest_length(s, p);
                // w (grad L grad L^T + (L - L0) hess L), hess L = (I - e e^T) / L
                let h = DenseMatrix::from_fn(2, 2, |i, j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    w * (e[i] * e[j] + (l - s.rest0) * (id - e[i] * e[j]) / l)
                });
                let (fa, fb) = self.free_ends(s);
                for r in 0..2 {
                    for q in 0..2 {
                        let v = h[(r, q)];
                        if let Some(fa) = fa {
                            c.push(2 * fa + r, 2 * fa + q, v);
                        }
                        if let Some(fb) = fb {
                            c.push(2 * fb + r, 2 * fb + q, v);
                        }
                        if let (Some(fa), Some(fb)) = (fa, fb) {
                            c.push(2 * fa + r, 2 * fb + q, -v);
                            c.push(2 * fb + r, 2 * fa + q, -v);
                        }
                    }
                }
            }
        }
        Some(GnBlocks {
            a,
            b: CscMatrix::zeros(n, n),
            c: c.to_csc().expect("in-bounds"),
        })
    }

    fn solve_equilibrium(&self, p: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>, SimError> {
        let start = guess.unwrap_or(p);
        Ok(solve_static(&self.energy_model(), p, start, &self.static_config)?.x)
    }

    fn initial_parameters(&self) -> Vec<f64> {
        self.x_target.clone()
    }
}

impl SpringBarProblem {
    /// Static solve with the full solver report (iterations, energy history).
    pub fn solve_static_report(
        &self,
        p: &[f64],
        start: &[f64],
    ) -> Result<crate::sim::StaticSolution, SimError> {
        solve_static(&self.energy_model(), p, start, &self.static_config)
    }

    /// Sweep sizes: `n_p` in {32, 128, 512, 2048} maps to lattices
    /// 9x2, 17x4, 33x8, 65x16 (`n_p = 2 (nw - 1) nh`).
    pub fn lattice_for_np(n_p: usize) -> Option<(usize, usize)> {
        (1..=64).find_map(|nh| {
            let nw = 4 * nh + 1;
            (2 * (nw - 1) * nh == n_p).then_some((nw, nh))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_zero_at_target() {
        let bar = SpringBarProblem::new(SpringBarConfig::default());
        let p = bar.initial_parameters();
        assert_eq!(bar.objective(&bar.x_target, &p), 0.0);
    }

    #[test]
    fn sweep_lattices() {
        assert_eq!(SpringBarProblem::lattice_for_np(32), Some((9, 2)));
        assert_eq!(SpringBarProblem::lattice_for_np(128), Some((17, 4)));
        assert_eq!(SpringBarProblem::lattice_for_np(512), Some((33, 8)));
        assert_eq!(SpringBarProblem::lattice_for_np(2048), Some((65, 16)));
    }

    #[test]
    fn two_by_two_blocks() {
        let bar = SpringBarProblem::new(SpringBarConfig {
            nw: 2,
            nh: 2,
            ..Default::default()
        });
        assert_eq!(bar.n_x(), 4);
        let p = bar.initial_parameters();
        let x = bar.solve_equilibrium(&p, None).unwrap();
        let blocks = crate::sensitivity::gn_blocks(&bar, &x, &p).unwrap();
        assert_eq!(
            blocks.a.to_dense(),
            CscMatrix::from_diagonal(&[0.25; 4]).to_dense()
        );
        assert_eq!(blocks.b.nnz(), 0);
        assert_eq!(blocks.c.nnz(), 0);
    }

    #[test]
    fn sag_is_moderate() {
        let bar = SpringBarProblem::new(SpringBarConfig::default());
        let p = bar.initial_parameters();
        let x = bar.solve_equilibrium(&p, None).unwrap();
        let sag = bar.tip_sag(&x);
        assert!(sag > 0.02 && sag < 0.3, "sag {sag}");
    }
}
