use std::time::Instant;

use super::{
    bicgstab, LdltFactorization, Preconditioner, SolveError, SolveReport, SparseFactorization,
    DEFAULT_PIVOT_DELTA, DEFAULT_PIVOT_EPSILON, DEFAULT_PIVOT_THRESHOLD,
};
use crate::sensitivity::KktSystem;
use crate::sparse::CscMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationConfig {
    pub eps_x: f64,
    pub eps_lambda: f64,
    pub refine_tolerance: f64,
    pub max_refine_iters: usize,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        Self {
            eps_x: 1e-6,
            eps_lambda: 1e-6,
            refine_tolerance: 1e-10,
            max_refine_iters: 50,
        }
    }
}

impl StabilizationConfig {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.eps_x >= 0.0 && self.eps_x.is_finite()) {
            return Err(SolveError::InvalidConfig(format!("eps_x = {}", self.eps_x)));
        }
        if !(self.eps_lambda >= 0.0 && self.eps_lambda.is_finite()) {
            return Err(SolveError::InvalidConfig(format!(
                "eps_lambda = {}",
                self.eps_lambda
            )));
        }
        if !(self.refine_tolerance > 0.0) {
            return Err(SolveError::InvalidConfig(format!(
                "refine_tolerance = {}",
                self.refine_tolerance
            )));
        }
        Ok(())
    }
}

/// The signed diagonal `[+eps_x (n_x), 0 (n_p), -eps_lambda (n_c)]`.
pub fn stabilization_diagonal(
    n_x: usize,
    n_p: usize,
    n_c: usize,
    cfg: &StabilizationConfig,
) -> Vec<f64> {
    let mut d = Vec::with_capacity(n_x + n_p + n_c);
    d.extend(std::iter::repeat_n(cfg.eps_x, n_x));
    d.extend(std::iter::repeat_n(0.0, n_p));
    d.extend(std::iter::repeat_n(-cfg.eps_lambda, n_c));
    d
}

pub fn stabilized_matrix(
    k: &KktSystem,
    cfg: &StabilizationConfig,
) -> Result<CscMatrix, SolveError> {
    let d = stabilization_diagonal(k.n_x, k.n_p, k.n_c, cfg);
    Ok(k.matrix.add_diagonal(&d)?)
}

/// Solves `K z = rhs` for the unstabilized KKT matrix.
///
/// The stabilized matrix is factorized once with a symmetric `L D L^T`; its
/// solution is accepted if it already meets `refine_tolerance` against `K`,
/// otherwise BiCGSTAB on `K` preconditioned with that factorization refines
/// it. If the symmetric factorization is unusable (non-symmetric `K`, a
/// breakdown, or no convergence) the same procedure runs with a pivoted LU.
pub fn solve_kkt_stabilized(
    k: &KktSystem,
    rhs: &[f64],
    cfg: &StabilizationConfig,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    cfg.validate()?;
    let n = k.dim();
    if rhs.len() != n {
        return Err(crate::sparse::SparseError::DimensionMismatch {
            op: "kkt rhs",
            expected: n.to_string(),
            found: rhs.len().to_string(),
        }
        .into());
    }
    let t0 = Instant::now();
    let stabilized = stabilized_matrix(k, cfg)?;
    if rhs.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0; n], SolveReport::default()));
    }
    let symmetric = stabilized.asymmetry() <= 1e-12 * stabilized.max_abs();
    if symmetric {
        if let Ok(ldlt) =
            LdltFactorization::new(&stabilized, DEFAULT_PIVOT_EPSILON, DEFAULT_PIVOT_DELTA)
        {
            let factor_time_s = t0.elapsed().as_secs_f64();
            let fill_nnz = ldlt.fill_nnz();
            if let Ok(out) = refine(k, rhs, &ldlt, cfg, factor_time_s, fill_nnz) {
                return Ok(out);
            }
        }
    }
    let t0 = Instant::now();
    let lu = SparseFactorization::new(&stabilized, DEFAULT_PIVOT_THRESHOLD)?;
    let factor_time_s = t0.elapsed().as_secs_f64();
    let fill_nnz = lu.fill_nnz();
    refine(k, rhs, &lu, cfg, factor_time_s, fill_nnz)
}

fn refine(
    k: &KktSystem,
    rhs: &[f64],
    precond: &dyn Preconditioner,
    cfg: &StabilizationConfig,
    factor_time_s: f64,
    fill_nnz: usize,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let t1 = Instant::now();
    let x0 = precond.apply(rhs);
    let out = bicgstab(
        &k.matrix,
        precond,
        rhs,
        x0,
        cfg.refine_tolerance,
        cfg.max_refine_iters,
    );
    if !out.converged {
        return Err(SolveError::NoConvergence {
            iterations: out.iterations,
            best_residual: out.relative_residual,
        });
    }
    let report = SolveReport {
        relative_residual: out.relative_residual,
        iterations: out.iterations,
        factor_time_s,
        solve_time_s: t1.elapsed().as_secs_f64(),
        fill_nnz,
    };
    Ok((out.x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::norm2;
    use crate::dense::DenseMatrix;
    use crate::linsolve::factor_sparse;
    use crate::sparse::stack_kkt_blocks;

    fn small_kkt() -> KktSystem {
        let i2 = CscMatrix::identity(2);
        let matrix = stack_kkt_blocks(
            &i2,
            &CscMatrix::zeros(2, 2),
            &CscMatrix::zeros(2, 2),
            &i2,
            &i2,
        )
        .unwrap();
        KktSystem::new(matrix, vec![0.0, 0.0, -1.0, -1.0, 0.0, 0.0], 2, 2).unwrap()
    }

    #[test]
    fn sign_pattern() {
        let k = small_kkt();
        let s = stabilized_matrix(&k, &StabilizationConfig::default()).unwrap();
        for i in 0..6 {
            let d = s.get(i, i) - k.matrix.get(i, i);
            match i {
                0 | 1 => assert!(d > 0.0),
                2 | 3 => assert_eq!(d, 0.0),
                _ => assert!(d < 0.0),
            }
        }
    }

    #[test]
    fn refined_residual_against_original() {
        let k = small_kkt();
        let (z, rep) = solve_kkt_stabilized(&k, &k.rhs, &StabilizationConfig::default()).unwrap();
        let r = crate::dense::sub(&k.matrix.spmv(&z).unwrap(), &k.rhs);
        assert!(norm2(&r) / norm2(&k.rhs) <= 1e-10);
        assert!(rep.relative_residual <= 1e-10);
        assert!(rep.iterations <= 50);
    }

    #[test]
    fn zero_stabilization_matches_plain_factorization() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 3.0]]);
        let i2 = CscMatrix::identity(2);
        let m = stack_kkt_blocks(
            &CscMatrix::from_dense(&a),
            &CscMatrix::zeros(1, 2),
            &CscMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0]])),
            &i2,
            &CscMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0], vec![-1.0]])),
        )
        .unwrap();
        let rhs = vec![0.0, 0.0, -1.0, 0.0, 0.0];
        let k = KktSystem::new(m, rhs.clone(), 2, 1).unwrap();
        let cfg = StabilizationConfig {
            eps_x: 0.0,
            eps_lambda: 0.0,
            ..Default::default()
        };
        let (z, rep) = solve_kkt_stabilized(&k, &rhs, &cfg).unwrap();
        assert!(rep.relative_residual <= 1e-10);
        let reference = factor_sparse(&k.matrix).unwrap().solve(&rhs);
        for (a, b) in z.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn negative_eps_rejected() {
        let k = small_kkt();
        let cfg = StabilizationConfig {
            eps_x: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            solve_kkt_stabilized(&k, &k.rhs, &cfg),
            Err(SolveError::InvalidConfig(_))
        ));
    }

    #[test]
    fn singular_stabilized_matrix() {
        // dc/dx = 0 makes the matrix singular whatever the stabilization
        let m = stack_kkt_blocks(
            &CscMatrix::zeros(1, 1),
            &CscMatrix::zeros(1, 1),
            &CscMatrix::zeros(1, 1),
            &CscMatrix::zeros(1, 1),
            &CscMatrix::zeros(1, 1),
        )
        .unwrap();
        let k = KktSystem::new(m, vec![0.0, 1.0, 0.0], 1, 1).unwrap();
        assert!(matches!(
            solve_kkt_stabilized(&k, &k.rhs, &StabilizationConfig::default()),
            Err(SolveError::SingularMatrix { .. })
        ));
    }
}
