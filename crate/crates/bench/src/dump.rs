//! `kkt-dump`: the first-iterate saddle-point matrix and its size statistics.

use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use sgn_core::linsolve::{solve_kkt_stabilized, StabilizationConfig};
use sgn_core::sensitivity::{assemble_sgn, gn_blocks};

use crate::spec::BenchSpec;
use crate::{create_dir, io_err, write_json, BenchError};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KktStats {
    pub problem: String,
    pub n_x: usize,
    pub n_p: usize,
    /// `2 n_x + n_p`
    pub dimension: usize,
    pub nnz: usize,
    /// entries of the symmetric factor used by the stabilized solve
    pub factor_fill_nnz: usize,
    /// storage of the dense reduced Hessian, for comparison
    pub dense_reduced_nnz: usize,
    pub symmetric: bool,
    pub solve_rel_residual: f64,
}

/// Writes `<out>/kkt.mtx` and `<out>/stats.json`.
pub fn cmd_kkt_dump(spec: &BenchSpec, out: &Path) -> Result<KktStats, BenchError> {
    let problem = spec.problem()?;
    let prob = problem.build(spec.seed)?;
    let p = prob.initial_parameters();
    let x = prob.solve_equilibrium(&p, None)?;
    let blocks = gn_blocks(prob.as_ref(), &x, &p)?;
    let k = assemble_sgn(prob.as_ref(), &x, &p, &blocks)?;
    let (_, report) = solve_kkt_stabilized(&k, &k.rhs, &StabilizationConfig::default())
        .map_err(sgn_core::SensitivityError::from)?;

    create_dir(out)?;
    let path = out.join("kkt.mtx");
    let file =
        std::fs::File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
    k.matrix
        .write_matrix_market(BufWriter::new(file))
        .map_err(|e| BenchError::Io {
            context: format!("writing {}", path.display()),
            source: std::io::Error::other(e.to_string()),
        })?;
    let stats = KktStats {
        problem: problem.name().to_string(),
        n_x: k.n_x,
        n_p: k.n_p,
        dimension: k.dim(),
        nnz: k.matrix.nnz(),
        factor_fill_nnz: report.fill_nnz,
        dense_reduced_nnz: k.n_p * k.n_p,
        symmetric: k.matrix.asymmetry() == 0.0,
        solve_rel_residual: report.relative_residual,
    };
    write_json(&out.join("stats.json"), &stats)?;
    Ok(stats)
}
