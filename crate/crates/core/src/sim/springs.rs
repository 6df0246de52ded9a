//! Linear springs `E = k/2 (|xa - xb| - L)^2` in two or three dimensions.

use crate::dense::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub stiffness: f64,
    pub rest: f64,
}

/// Energy, gradient with respect to `xa` and Hessian block `d2E/dxa2` of one
/// spring. The gradient for `xb` is the negation; the `xa`/`xb` Hessian block
/// is `-H` and the `xb`/`xb` block is `H`.
pub fn spring_terms(xa: &[f64], xb: &[f64], k: f64, rest: f64) -> (f64, Vec<f64>, DenseMatrix) {
    let d: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| a - b).collect();
    let dim = d.len();
    let l = crate::dense::norm2(&d);
    let stretch = l - rest;
    let energy = 0.5 * k * stretch * stretch;
    if l == 0.0 {
        // degenerate: isotropic stiffness keeps the Hessian well defined
        return (energy, vec![0.0; dim], DenseMatrix::identity(dim));
    }
    let u: Vec<f64> = d.iter().map(|v| v / l).collect();
    let grad: Vec<f64> = u.iter().map(|ui| k * stretch * ui).collect();
    let ratio = 1.0 - rest / l;
    let h = DenseMatrix::from_fn(dim, dim, |i, j| {
        let uu = u[i] * u[j];
        let id = if i == j { 1.0 } else { 0.0 };
        k * (uu + ratio * (id - uu))
    });
    (energy, grad, h)
}

/// Springs over `n_vertices` points of dimension `dim`, positions stacked
/// vertex-major.
#[derive(Debug, Clone)]
pub struct SpringNetwork {
    pub dim: usize,
    pub n_vertices: usize,
    pub springs: Vec<Spring>,
}

impl SpringNetwork {
    /// Springs between grid neighbours (structural) and cell diagonals (shear)
    /// of a `nw x nh` lattice, vertex `(i, j)` at index `j * nw + i`, rest
    /// lengths from `pos`.
    pub fn lattice(nw: usize, nh: usize, dim: usize, pos: &[f64], stiffness: f64) -> Self {
        let id = |i: usize, j: usize| j * nw + i;
        let mut pairs = Vec::new();
        for j in 0..nh {
            for i in 0..nw {
                if i + 1 < nw {
                    pairs.push((id(i, j), id(i + 1, j)));
                }
                if j + 1 < nh {
                    pairs.push((id(i, j), id(i, j + 1)));
                }
                if i + 1 < nw && j + 1 < nh {
                    pairs.push((id(i, j), id(i + 1, j + 1)));
                    pairs.push((id(i + 1, j), id(i, j + 1)));
                }
            }
        }
        let springs = pairs
            .into_iter()
            .map(|(a, b)| {
                let d: f64 = (0..dim)
                    .map(|k| (pos[a * dim + k] - pos[b * dim + k]).powi(2))
                    .sum();
                Spring {
                    a,
                    b,
                    stiffness,
                    rest: d.sqrt(),
                }
            })
            .collect();
        Self {
            dim,
            n_vertices: nw * nh,
            springs,
        }
    }

    fn vertex<'a>(&self, pos: &'a [f64], v: usize) -> &'a [f64] {
        &pos[v * self.dim..(v + 1) * self.dim]
    }

    pub fn energy(&self, pos: &[f64]) -> f64 {
        self.springs
            .iter()
            .map(|s| {
                let (e, _, _) = spring_terms(
                    self.vertex(pos, s.a),
                    self.vertex(pos, s.b),
                    s.stiffness,
                    s.rest,
                );
                e
            })
            .sum()
    }

    /// Adds `dE/dpos` into `g` (full vertex-major layout).
    pub fn add_gradient(&self, pos: &[f64], g: &mut [f64]) {
        let d = self.dim;
        for s in &self.springs {
            let (_, ga, _) = spring_terms(
                self.vertex(pos, s.a),
                self.vertex(pos, s.b),
                s.stiffness,
                s.rest,
            );
            for k in 0..d {
                g[s.a * d + k] += ga[k];
                g[s.b * d + k] -= ga[k];
            }
        }
    }

    /// Pushes Hessian entries `(row, col, value)` in full vertex-major indices.
    pub fn add_hessian(&self, pos: &[f64], out: &mut Vec<(usize, usize, f64)>) {
        let d = self.dim;
        for s in &self.springs {
            let (_, _, h) = spring_terms(
                self.vertex(pos, s.a),
                self.vertex(pos, s.b),
                s.stiffness,
                s.rest,
            );
            for r in 0..d {
                for c in 0..d {
                    let v = h[(r, c)];
                    out.push((s.a * d + r, s.a * d + c, v));
                    out.push((s.b * d + r, s.b * d + c, v));
                    out.push((s.a * d + r, s.b * d + c, -v));
                    out.push((s.b * d + r, s.a * d + c, -v));
                }
            }
        }
    }
}
