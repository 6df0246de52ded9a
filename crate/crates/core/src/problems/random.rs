//! Seeded random linear instances for equivalence testing.
//!
//! `c = Jx x + Jp p - b` with a strictly diagonally dominant sparse `Jx`
//! (hence nonsingular) and least-squares residuals that couple `x` and `p`,
//! so every Gauss-Newton block is populated. The last `n_p` residuals are a
//! weighted parameter penalty that keeps the reduced Hessian positive definite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LinearProblem;
use crate::sparse::TripletMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstanceConfig {
    pub n_x: (usize, usize),
    pub n_p: (usize, usize),
    /// fraction of off-diagonal entries kept in each random block
    pub density: f64,
}

impl Default for RandomInstanceConfig {
    fn default() -> Self {
        Self {
            n_x: (5, 50),
            n_p: (2, 30),
            density: 0.2,
        }
    }
}

fn sparse_block(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    density: f64,
    t: &mut TripletMatrix,
    row0: usize,
) {
    for j in 0..cols {
        let mut any = false;
        for i in 0..rows {
            if rng.random::<f64>() < density {
                t.push(row0 + i, j, rng.random_range(-1.0..1.0));
                any = true;
            }
        }
        if !any {
            t.push(
                row0 + rng.random_range(0..rows),
                j,
                rng.random_range(-1.0..1.0),
            );
        }
    }
}

/// Instance number `seed`; the same seed always yields the same problem.
pub fn random_instance(seed: u64, cfg: &RandomInstanceConfig) -> LinearProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = rng.random_range(cfg.n_x.0..=cfg.n_x.1);
    let np = rng.random_range(cfg.n_p.0..=cfg.n_p.1);
    let d = cfg.density;

    let mut jx = TripletMatrix::new(nx, nx);
    let mut row_abs = vec![0.0; nx];
    for j in 0..nx {
        for i in 0..nx {
            if i != j && rng.random::<f64>() < d {
                let v: f64 = rng.random_range(-1.0..1.0);
                row_abs[i] += v.abs();
                jx.push(i, j, v);
            }
        }
    }
    for (i, s) in row_abs.iter().enumerate() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        jx.push(i, i, sign * (1.0 + s + rng.random::<f64>()));
    }

    let mut jp = TripletMatrix::new(nx, np);
    sparse_block(&mut rng, nx, np, d, &mut jp, 0);

    let m = nx + np;
    let mut rx = TripletMatrix::new(m, nx);
    sparse_block(&mut rng, nx, nx, d, &mut rx, 0);
    let mut rp = TripletMatrix::new(m, np);
    sparse_block(&mut rng, nx, np, 0.5 * d, &mut rp, 0);
    for k in 0..np {
        rp.push(nx + k, k, 1.0);
    }
    let mut w: Vec<f64> = (0..nx).map(|_| rng.random_range(0.5..2.0)).collect();
    w.extend((0..np).map(|_| rng.random_range(1e-3..1e-1)));

    let mut vec_of =
        |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let b = vec_of(nx);
    let t = vec_of(m);
    let p0 = vec_of(np);
    LinearProblem {
        jx: jx.to_csc().expect("in bounds"),
        jp: jp.to_csc().expect("in bounds"),
        b,
        rx: rx.to_csc().expect("in bounds"),
        rp: rp.to_csc().expect("in bounds"),
        t,
        w,
        p0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EquilibriumProblem;

    #[test]
    fn same_seed_same_instance() {
        let cfg = RandomInstanceConfig::default();
        let (a, b) = (random_instance(7, &cfg), random_instance(7, &cfg));
        assert_eq!(a.jx, b.jx);
        assert_eq!(a.rp, b.rp);
        assert_eq!(a.p0, b.p0);
        assert_ne!(random_instance(8, &cfg).p0, a.p0);
    }

    #[test]
    fn sizes_within_ranges() {
        let cfg = RandomInstanceConfig::default();
        for seed in 0..50 {
            let p = random_instance(seed, &cfg);
            assert!((5..=50).contains(&p.n_x()));
            assert!((2..=30).contains(&p.n_p()));
        }
    }
}
