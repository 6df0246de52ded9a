use super::SimError;
use crate::dense::{dot, norm_inf};
use crate::linsolve::{factor_sparse, SolveError};
use crate::sparse::{CscMatrix, TripletMatrix};

/// An energy `E(x, p)` whose stationary points are equilibria.
pub trait EnergyModel {
    fn dim(&self) -> usize;
    fn energy(&self, x: &[f64], p: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], p: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64], p: &[f64]) -> CscMatrix;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticConfig {
    /// `|dE/dx|_inf` at convergence
    pub tolerance: f64,
    pub max_iters: usize,
    /// coordinates that never move
    pub fixed: Vec<usize>,
}

impl Default for StaticConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iters: 200,
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StaticSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// energy at the start and after every accepted step
    pub energies: Vec<f64>,
    pub residual: f64,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const MAX_SHIFTS: usize = 30;

fn masked_gradient<M: EnergyModel + ?Sized>(
    m: &M,
    x: &[f64],
    p: &[f64],
    fixed: &[bool],
) -> Vec<f64> {
    let mut g = m.gradient(x, p);
    for (gi, &f) in g.iter_mut().zip(fixed) {
        if f {
            *gi = 0.0;
        }
    }
    g
}

/// Replaces fixed rows/columns by identity and adds `shift` to the free diagonal.
fn constrained_hessian(h: &CscMatrix, fixed: &[bool], shift: f64) -> CscMatrix {
    let n = h.rows();
    let mut t = TripletMatrix::with_capacity(n, n, h.nnz() + n);
    for (i, j, v) in h.iter() {
        if !fixed[i] && !fixed[j] {
            t.push(i, j, v);
        }
    }
    for (i, &f) in fixed.iter().enumerate() {
        t.push(i, i, if f { 1.0 } else { shift });
    }
    t.to_csc().expect("indices from a valid matrix")
}

/// Newton's method with a backtracking line search on the energy.
///
/// An indefinite or singular stiffness is shifted by `tau I`, starting at
/// `1e-6 trace/n` and growing tenfold until a descent direction results.
pub fn solve_static<M: EnergyModel + ?Sized>(
    model: &M,
    p: &[f64],
    x_init: &[f64],
    cfg: &StaticConfig,
) -> Result<StaticSolution, SimError> {
    let n = model.dim();
    if x_init.len() != n {
        return Err(SimError::InvalidInput(format!(
            "initial state has length {}, expected {n}",
            x_init.len()
        )));
    }
    let mut fixed = vec![false; n];
    for &i in &cfg.fixed {
        if i >= n {
            return Err(SimError::InvalidInput(format!(
                "fixed index {i} out of range"
            )));
        }
        fixed[i] = true;
    }
    let mut x = x_init.to_vec();
    let mut e = model.energy(&x, p);
    let mut energies = vec![e];
    let mut g = masked_gradient(model, &x, p, &fixed);
    let mut res = norm_inf(&g);
    let mut it = 0;
    while res > cfg.tolerance {
        if it == cfg.max_iters || !res.is_finite() {
            return Err(SimError::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        it += 1;
        let h = model.hessian(&x, p);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let free = fixed.iter().filter(|f| !**f).count().max(1);
        let trace: f64 = (0..n)
            .filter(|&i| !fixed[i])
            .map(|i| h.get(i, i).abs())
            .sum::<f64>();
        let mut tau = 0.0;
        let mut tau_next = (1e-6 * trace / free as f64).max(f64::MIN_POSITIVE);
        let mut dir = None;
        for _ in 0..MAX_SHIFTS {
            let k = constrained_hessian(&h, &fixed, tau);
            match factor_sparse(&k) {
                Ok(f) => {
                    let d = f.solve(&neg_g);
                    if d.iter().all(|v| v.is_finite()) && dot(&d, &g) < 0.0 {
                        dir = Some(d);
                        break;
                    }
                }
                Err(SolveError::SingularMatrix { .. }) => {}
                Err(other) => return Err(other.into()),
            }
            tau = tau_next;
            tau_next *= 10.0;
        }
        let d = dir.unwrap_or(neg_g);
        let slope = dot(&d, &g);

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            let et = model.energy(&xt, p);
            if et.is_finite() {
                let armijo = et <= e + ARMIJO * alpha * slope;
                // below round-off the energy cannot resolve progress; accept
                // the step if the force residual shrinks instead
                let flat = (et - e).abs() <= 1e-13 * e.abs().max(1.0);
                let gt = masked_gradient(model, &xt, p, &fixed);
                let rt = norm_inf(&gt);
                if armijo || (flat && rt < res) {
                    x = xt;
                    e = et.min(e);
                    g = gt;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(SimError::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        energies.push(e);
    }
    Ok(StaticSolution {
        x,
        iterations: it,
        energies,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One mass hanging from a spring attached at height 0, position = extension downward.
    struct HangingMass {
        k: f64,
        rest: f64,
        weight: f64,
    }

    impl EnergyModel for HangingMass {
        fn dim(&self) -> usize {
            1
        }
        fn energy(&self, x: &[f64], _p: &[f64]) -> f64 {
            0.5 * self.k * (x[0] - self.rest).powi(2) - self.weight * x[0]
        }
        fn gradient(&self, x: &[f64], _p: &[f64]) -> Vec<f64> {
            vec![self.k * (x[0] - self.rest) - self.weight]
        }
        fn hessian(&self, _x: &[f64], _p: &[f64]) -> CscMatrix {
            CscMatrix::from_diagonal(&[self.k])
        }
    }

    #[test]
    fn hanging_mass_analytic() {
        let m = HangingMass {
            k: 100.0,
            rest: 1.0,
            weight: 10.0,
        };
        let s = solve_static(&m, &[], &[1.0], &StaticConfig::default()).unwrap();
        assert!((s.x[0] - 1.1).abs() < 1e-12);
        let again = solve_static(&m, &[], &s.x, &StaticConfig::default()).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn zero_gravity_stays_at_rest() {
        let m = HangingMass {
            k: 100.0,
            rest: 1.0,
            weight: 0.0,
        };
        let s = solve_static(&m, &[], &[1.0], &StaticConfig::default()).unwrap();
        assert_eq!(s.x, vec![1.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn fixed_coordinates_do_not_move() {
        let m = HangingMass {
            k: 100.0,
            rest: 1.0,
            weight: 10.0,
        };
        let cfg = StaticConfig {
            fixed: vec![0],
            ..Default::default()
        };
        let s = solve_static(&m, &[], &[3.0], &cfg).unwrap();
        assert_eq!(s.x, vec![3.0]);
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        struct Quartic;
        impl EnergyModel for Quartic {
            fn dim(&self) -> usize {
                1
            }
            fn energy(&self, x: &[f64], _p: &[f64]) -> f64 {
                x[0].powi(4)
            }
            fn gradient(&self, x: &[f64], _p: &[f64]) -> Vec<f64> {
                vec![4.0 * x[0].powi(3)]
            }
            fn hessian(&self, x: &[f64], _p: &[f64]) -> CscMatrix {
                CscMatrix::from_diagonal(&[12.0 * x[0] * x[0]])
            }
        }
        let cfg = StaticConfig {
            max_iters: 3,
            ..Default::default()
        };
        assert!(matches!(
            solve_static(&Quartic, &[], &[1.0], &cfg),
            Err(SimError::NoConvergence { iterations: 3, .. })
        ));
    }
}
