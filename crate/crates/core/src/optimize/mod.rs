//! Outer minimization over `p` with a forward re-solve per trial step.
//!
//! [`minimize`] drives every method; the per-method search directions are
//! exposed individually so benchmarks can time them in isolation.

mod bounds;
mod direction;
mod lbfgs;
mod minimize;
mod sqp;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::linsolve::{SolveError, StabilizationConfig, DEFAULT_CG_ETA};
use crate::sensitivity::SensitivityError;
use crate::sim::SimError;

pub use bounds::{clamp_to_bounds, project_direction_bounds};
pub use direction::{
    compute_direction, direction_bgn, direction_cg_gn, direction_dgn, direction_gd,
    direction_lbfgs, direction_lbfgs_sgn, direction_sgn, direction_sparse_ggn,
    direction_sparse_newton, DirectionTimings, SearchDirection,
};
pub use lbfgs::{two_loop, LbfgsHistory};
pub use minimize::{minimize, IterationRecord, OptimizerRun, TerminationReason};
pub use sqp::{sqp_step, SqpStep};

/// Search-direction strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// sparse saddle-point Gauss-Newton
    Sgn,
    /// dense reduced Gauss-Newton Hessian
    Dgn,
    /// block substitution, requires `B = C = 0` and square `dc/dp`
    Bgn,
    /// matrix-free conjugate gradients on the reduced Gauss-Newton operator
    CgGn,
    Gd,
    Lbfgs,
    /// L-BFGS whose initial inverse Hessian is one sparse Gauss-Newton solve
    LbfgsSgn,
    SparseGgn,
    SparseNewton,
    Sqp,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Sgn,
        Method::Dgn,
        Method::Bgn,
        Method::CgGn,
        Method::Gd,
        Method::Lbfgs,
        Method::LbfgsSgn,
        Method::SparseGgn,
        Method::SparseNewton,
        Method::Sqp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgn => "sgn",
            Method::Dgn => "dgn",
            Method::Bgn => "bgn",
            Method::CgGn => "cg_gn",
            Method::Gd => "gd",
            Method::Lbfgs => "lbfgs",
            Method::LbfgsSgn => "lbfgs_sgn",
            Method::SparseGgn => "sparse_ggn",
            Method::SparseNewton => "sparse_newton",
            Method::Sqp => "sqp",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown method '{name}'; valid methods: {valid}")]
pub struct UnknownMethod {
    pub name: String,
    pub valid: String,
}

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// How parameter bounds declared by the problem are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundMode {
    /// bounds are ignored
    None,
    /// directions are filtered at active bounds and trial points clamped
    #[default]
    ProjectedDirection,
    /// the problem carries its own barrier; the optimizer does nothing
    LogBarrierInProblem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant
    pub c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub lbfgs_history: usize,
    pub cg_eta: f64,
    pub stabilization: StabilizationConfig,
    pub bound_mode: BoundMode,
    /// first nonzero diagonal shift tried when a second-order direction is not descent
    pub tau0: f64,
    pub max_tau_increases: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Sgn,
            max_iters: 100,
            grad_tol: 1e-5,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            lbfgs_history: 10,
            cg_eta: DEFAULT_CG_ETA,
            stabilization: StabilizationConfig::default(),
            bound_mode: BoundMode::default(),
            tau0: 1e-6,
            max_tau_increases: 12,
        }
    }
}

impl OptimizerConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("c1", self.c1),
            ("cg_eta", self.cg_eta),
            ("tau0", self.tau0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OptimizerError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(OptimizerError::InvalidConfig(format!(
                "backtrack factor must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        if self.c1 >= 1.0 {
            return Err(OptimizerError::InvalidConfig(format!(
                "c1 must be < 1, got {}",
                self.c1
            )));
        }
        if self.lbfgs_history == 0 && matches!(self.method, Method::Lbfgs | Method::LbfgsSgn) {
            return Err(OptimizerError::InvalidConfig(
                "lbfgs_history must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("forward simulation failed: {0}")]
    ForwardSimFailure(#[from] SimError),
    #[error("no decrease after {backtracks} backtracking steps at iteration {iteration}")]
    LineSearchFailure { iteration: usize, backtracks: usize },
    #[error("merit function did not decrease after {backtracks} backtracking steps")]
    MeritLineSearchFailure { backtracks: usize },
    #[error("parameter {index} = {value} lies outside [{lower}, {upper}]")]
    InfeasiblePoint {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("method {method} not applicable: {reason}")]
    NotApplicable { method: Method, reason: String },
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn unknown_method_lists_valid_ones() {
        let err = "newton".parse::<Method>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("newton"));
        for m in Method::ALL {
            assert!(msg.contains(m.name()));
        }
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            backtrack: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            grad_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
