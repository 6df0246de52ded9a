//! Forward simulation: equilibrium states `x(p)` for static and time-stepped problems.
//!
//! The per-step update rules double as constraint functions `c(x, p)`, so each
//! simulator also exposes its stacked constraint residual and Jacobians.

mod explicit;
mod implicit;
mod springs;
mod statics;

use thiserror::Error;

use crate::linsolve::SolveError;

pub use explicit::{rollout_explicit, CarDynamics, BLOWUP_LIMIT};
pub use implicit::{rollout_implicit, ClothModel};
pub use springs::{spring_terms, Spring, SpringNetwork};
pub use statics::{solve_static, EnergyModel, StaticConfig, StaticSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("time step {step} did not converge: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("state became non-finite or exceeded the blowup limit at step {step}")]
    NumericalBlowup { step: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Explicit,
    Implicit,
}

/// A time-stepped trajectory. `states` stacks `x^1 .. x^N`; `x^0` is kept
/// separately since it is not an unknown.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub integrator: Integrator,
    pub h: f64,
    pub n_steps: usize,
    pub state_dim: usize,
    pub control_dim: usize,
    pub initial: Vec<f64>,
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
}

impl Rollout {
    /// State at step `i` (0 is the initial state).
    pub fn state(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.initial
        } else {
            &self.states[(i - 1) * self.state_dim..i * self.state_dim]
        }
    }

    pub fn control(&self, i: usize) -> &[f64] {
        &self.controls[(i - 1) * self.control_dim..i * self.control_dim]
    }

    /// One CSV row per frame: `step,time,s0,s1,...`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "step,time")?;
        for k in 0..self.state_dim {
            write!(w, ",s{k}")?;
        }
        writeln!(w)?;
        for i in 0..=self.n_steps {
            write!(w, "{i},{}", i as f64 * self.h)?;
            for v in self.state(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
