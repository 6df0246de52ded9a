//! Benchmark harness: optimizer runs, direction-time sweeps, equivalence
//! verification and saddle-point matrix dumps, all driven by a JSON
//! [`BenchSpec`] and writing CSV/JSON artifacts.

pub mod dump;
pub mod runs;
pub mod scaling;
pub mod spec;
pub mod verify;

use thiserror::Error;

use sgn_core::optimize::{OptimizerError, UnknownMethod};
use sgn_core::sensitivity::SensitivityError;
use sgn_core::sim::SimError;

pub use dump::{cmd_kkt_dump, KktStats};
pub use runs::{cmd_optimize, MethodSummary, OptimizeSummary};
pub use scaling::{cmd_scaling, time_direction, ScalingRow};
pub use spec::{BenchSpec, ProblemSpec, VerifySpec};
pub use verify::{cmd_verify, CheckResult, Fault, KktTally, VerifyReport};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    UnknownMethod(#[from] UnknownMethod),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl BenchError {
    /// 2 for anything the caller got wrong, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::UnknownMethod(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> BenchError {
    let context = context.into();
    move |source| BenchError::Io { context, source }
}

pub(crate) fn create_dir(dir: &std::path::Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

pub(crate) fn write_json<T: serde::Serialize>(
    path: &std::path::Path,
    value: &T,
) -> Result<(), BenchError> {
    let file =
        std::fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
