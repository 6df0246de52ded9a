//! Python module `sgn`: build a benchmark problem, solve its equilibrium,
//! compute search directions and run the optimizers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sgn_core::optimize::{compute_direction, minimize, LbfgsHistory, Method, OptimizerConfig};
use sgn_core::problems::{
    random_instance, CarConfig, CarControlProblem, ClothConfig, ClothControlProblem, QuadraticToy,
    RandomInstanceConfig, ScalarCubic, SpringBarConfig, SpringBarProblem,
};
use sgn_core::sensitivity::adjoint_gradient;
use sgn_core::EquilibriumProblem;

fn runtime(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse::<Method>()
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// An equilibrium-constrained problem `min f(x, p)` subject to `c(x, p) = 0`.
#[pyclass(frozen)]
struct Problem {
    inner: Box<dyn EquilibriumProblem + Send + Sync>,
    name: &'static str,
}

impl Problem {
    fn new(name: &'static str, inner: impl EquilibriumProblem + Send + Sync + 'static) -> Self {
        Self {
            inner: Box::new(inner),
            name,
        }
    }

    fn check_len(&self, p: &[f64]) -> PyResult<()> {
        if p.len() != self.inner.n_p() {
            return Err(PyValueError::new_err(format!(
                "expected {} parameters, got {}",
                self.inner.n_p(),
                p.len()
            )));
        }
        Ok(())
    }

    fn state(&self, p: &[f64]) -> PyResult<Vec<f64>> {
        self.check_len(p)?;
        self.inner.solve_equilibrium(p, None).map_err(runtime)
    }
}

#[pymethods]
impl Problem {
    /// Cantilevered spring lattice of `nw x nh` vertices whose rest
    /// positions are the parameters.
    #[staticmethod]
    #[pyo3(signature = (nw=16, nh=4, w_r=0.0))]
    fn spring_bar(nw: usize, nh: usize, w_r: f64) -> PyResult<Self> {
        if nw < 2 || nh < 1 {
            return Err(PyValueError::new_err(
                "spring_bar needs nw >= 2 and nh >= 1",
            ));
        }
        Ok(Self::new(
            "spring_bar",
            SpringBarProblem::new(SpringBarConfig {
                nw,
                nh,
                w_r,
                ..Default::default()
            }),
        ))
    }

    /// Kinematic car steered to a goal pose over `n_steps` explicit steps.
    #[staticmethod]
    #[pyo3(signature = (n_steps=500))]
    fn car(n_steps: usize) -> PyResult<Self> {
        if n_steps == 0 {
            return Err(PyValueError::new_err("car needs n_steps >= 1"));
        }
        Ok(Self::new(
            "car",
            CarControlProblem::new(CarConfig {
                n_steps,
                ..Default::default()
            }),
        ))
    }

    /// Square cloth with controlled corners, implicit Euler time steps.
    #[staticmethod]
    #[pyo3(signature = (side=5, n_steps=20))]
    fn cloth(side: usize, n_steps: usize) -> PyResult<Self> {
        let prob = ClothControlProblem::new(ClothConfig {
            side,
            n_steps,
            ..Default::default()
        })
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self::new("cloth", prob))
    }

    /// Seeded random instance with exactly `n_x` states and `n_p` parameters.
    #[staticmethod]
    #[pyo3(signature = (n_x, n_p, seed=0, density=0.2))]
    fn random(n_x: usize, n_p: usize, seed: u64, density: f64) -> PyResult<Self> {
        if n_x == 0 || n_p == 0 || !(0.0..=1.0).contains(&density) {
            return Err(PyValueError::new_err(
                "random needs n_x, n_p >= 1 and density in [0, 1]",
            ));
        }
        let cfg = RandomInstanceConfig {
            n_x: (n_x, n_x),
            n_p: (n_p, n_p),
            density,
        };
        Ok(Self::new("random", random_instance(seed, &cfg)))
    }

    #[staticmethod]
    fn quadratic_toy() -> Self {
        Self::new("quadratic_toy", QuadraticToy)
    }

    #[staticmethod]
    fn scalar_cubic() -> Self {
        Self::new("scalar_cubic", ScalarCubic)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.name
    }

    #[getter]
    fn n_x(&self) -> usize {
        self.inner.n_x()
    }

    #[getter]
    fn n_p(&self) -> usize {
        self.inner.n_p()
    }

    fn initial_parameters(&self) -> Vec<f64> {
        self.inner.initial_parameters()
    }

    /// States `x` with `c(x, p) = 0`.
    fn solve_equilibrium(&self, py: Python<'_>, p: Vec<f64>) -> PyResult<Vec<f64>> {
        py.detach(|| self.state(&p))
    }

    /// `f(x(p), p)`.
    fn objective(&self, py: Python<'_>, p: Vec<f64>) -> PyResult<f64> {
        py.detach(|| {
            let x = self.state(&p)?;
            Ok(self.inner.objective(&x, &p))
        })
    }

    /// `df/dp` by the adjoint method.
    fn gradient(&self, py: Python<'_>, p: Vec<f64>) -> PyResult<Vec<f64>> {
        py.detach(|| {
            let x = self.state(&p)?;
            adjoint_gradient(self.inner.as_ref(), &x, &p).map_err(runtime)
        })
    }

    /// Search direction `dp` of `method` ("sgn", "dgn", "cg_gn", ...) at `p`,
    /// with an empty quasi-Newton history.
    #[pyo3(signature = (p, method="sgn"))]
    fn direction(&self, py: Python<'_>, p: Vec<f64>, method: &str) -> PyResult<Vec<f64>> {
        let cfg = OptimizerConfig::with_method(parse_method(method)?);
        py.detach(|| {
            let x = self.state(&p)?;
            let history = LbfgsHistory::new(cfg.lbfgs_history);
            compute_direction(self.inner.as_ref(), &x, &p, &cfg, &history)
                .map(|d| d.dp)
                .map_err(runtime)
        })
    }

    /// Runs `method` from `p0` (default: the initial parameters). Returns a
    /// dict with the final `p`, the per-iteration `f` and `grad_norm`, and
    /// the `termination` reason.
    #[pyo3(signature = (method="sgn", p0=None, max_iters=100, grad_tol=1e-5))]
    fn minimize<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        p0: Option<Vec<f64>>,
        max_iters: usize,
        grad_tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = OptimizerConfig {
            max_iters,
            grad_tol,
            ..OptimizerConfig::with_method(parse_method(method)?)
        };
        let p0 = p0.unwrap_or_else(|| self.inner.initial_parameters());
        self.check_len(&p0)?;
        let run = py
            .detach(|| minimize(self.inner.as_ref(), &p0, &cfg))
            .map_err(runtime)?;
        let out = PyDict::new(py);
        out.set_item("p", &run.p)?;
        out.set_item("f", run.records.iter().map(|r| r.f).collect::<Vec<_>>())?;
        out.set_item(
            "grad_norm",
            run.records.iter().map(|r| r.grad_norm).collect::<Vec<_>>(),
        )?;
        out.set_item("iterations", run.iterations())?;
        out.set_item("termination", run.termination.name())?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem({}, n_x={}, n_p={})",
            self.name,
            self.inner.n_x(),
            self.inner.n_p()
        )
    }
}

#[pymodule]
fn sgn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add(
        "METHODS",
        Method::ALL.iter().map(|m| m.name()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
