//! JSON run specifications.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sgn_core::optimize::{Method, OptimizerConfig};
use sgn_core::problems::{
    random_instance, CarConfig, CarControlProblem, ClothConfig, ClothControlProblem, QuadraticToy,
    RandomInstanceConfig, ScalarCubic, SpringBarConfig, SpringBarProblem,
};
use sgn_core::EquilibriumProblem;

use crate::BenchError;

/// Externally tagged, e.g. `{"spring_bar": {"nw": 16}}` or `"quadratic_toy"`,
/// so parse errors keep their position inside the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    SpringBar {
        #[serde(default = "defaults::nw")]
        nw: usize,
        #[serde(default = "defaults::nh")]
        nh: usize,
        #[serde(default)]
        w_r: f64,
        #[serde(default)]
        stiffness: Option<f64>,
    },
    Car {
        #[serde(default = "defaults::car_steps")]
        n_steps: usize,
        #[serde(default)]
        target: Option<[f64; 3]>,
        #[serde(default)]
        v_max: Option<f64>,
        #[serde(default)]
        s_max: Option<f64>,
    },
    Cloth {
        #[serde(default = "defaults::cloth_side")]
        side: usize,
        #[serde(default = "defaults::cloth_steps")]
        n_steps: usize,
        #[serde(default)]
        keyframes: Vec<usize>,
    },
    /// seeded random affine instance with fixed sizes
    Random {
        n_x: usize,
        n_p: usize,
        #[serde(default = "defaults::density")]
        density: f64,
    },
    QuadraticToy,
    ScalarCubic,
}

mod defaults {
    pub fn nw() -> usize {
        16
    }
    pub fn nh() -> usize {
        4
    }
    pub fn car_steps() -> usize {
        500
    }
    pub fn cloth_side() -> usize {
        5
    }
    pub fn cloth_steps() -> usize {
        20
    }
    pub fn density() -> f64 {
        0.2
    }
    pub fn methods() -> Vec<String> {
        vec!["sgn".into(), "dgn".into()]
    }
    pub fn max_iters() -> usize {
        50
    }
    pub fn grad_tol() -> f64 {
        1e-5
    }
    pub fn repetitions() -> usize {
        5
    }
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::SpringBar { .. } => "spring_bar",
            ProblemSpec::Car { .. } => "car",
            ProblemSpec::Cloth { .. } => "cloth",
            ProblemSpec::Random { .. } => "random",
            ProblemSpec::QuadraticToy => "quadratic_toy",
            ProblemSpec::ScalarCubic => "scalar_cubic",
        }
    }

    /// Instantiates the problem; `seed` only matters for random instances.
    pub fn build(&self, seed: u64) -> Result<Box<dyn EquilibriumProblem>, BenchError> {
        Ok(match self {
            ProblemSpec::SpringBar {
                nw,
                nh,
                w_r,
                stiffness,
            } => {
                if *nw < 2 || *nh < 1 {
                    return Err(BenchError::Config(format!(
                        "spring_bar needs nw >= 2 and nh >= 1, got {nw}x{nh}"
                    )));
                }
                Box::new(SpringBarProblem::new(SpringBarConfig {
                    nw: *nw,
                    nh: *nh,
                    w_r: *w_r,
                    stiffness: *stiffness,
                    ..Default::default()
                }))
            }
            ProblemSpec::Car {
                n_steps,
                target,
                v_max,
                s_max,
            } => {
                if *n_steps == 0 {
                    return Err(BenchError::Config("car needs n_steps >= 1".into()));
                }
                let d = CarConfig::default();
                Box::new(CarControlProblem::new(CarConfig {
                    n_steps: *n_steps,
                    target: target.unwrap_or(d.target),
                    v_max: v_max.unwrap_or(d.v_max),
                    s_max: s_max.unwrap_or(d.s_max),
                    ..d
                }))
            }
            ProblemSpec::Cloth {
                side,
                n_steps,
                keyframes,
            } => Box::new(
                ClothControlProblem::new(ClothConfig {
                    side: *side,
                    n_steps: *n_steps,
                    keyframes: keyframes.clone(),
                    ..Default::default()
                })
                .map_err(|e| BenchError::Config(e.to_string()))?,
            ),
            ProblemSpec::Random { n_x, n_p, density } => {
                if *n_x == 0 || *n_p == 0 || !(0.0..=1.0).contains(density) {
                    return Err(BenchError::Config(format!(
                        "random needs n_x, n_p >= 1 and density in [0, 1], got {n_x}, {n_p}, {density}"
                    )));
                }
                Box::new(random_instance(
                    seed,
                    &RandomInstanceConfig {
                        n_x: (*n_x, *n_x),
                        n_p: (*n_p, *n_p),
                        density: *density,
                    },
                ))
            }
            ProblemSpec::QuadraticToy => Box::new(QuadraticToy),
            ProblemSpec::ScalarCubic => Box::new(ScalarCubic),
        })
    }

    /// The same problem at sweep size `size`: `n_p` for the spring bar
    /// (square lattices `(4k + 1) x k`) and random instances (`n_x = n_p`),
    /// the number of steps for car and cloth.
    pub fn resized(&self, size: usize) -> Result<ProblemSpec, BenchError> {
        let mut out = self.clone();
        match &mut out {
            ProblemSpec::SpringBar { nw, nh, .. } => {
                let (w, h) = SpringBarProblem::lattice_for_np(size).ok_or_else(|| {
                    BenchError::Config(format!("no spring_bar lattice has n_p = {size}; use 2 (4k) k, e.g. 32, 128, 512, 2048"))
                })?;
                *nw = w;
                *nh = h;
            }
            ProblemSpec::Car { n_steps, .. } | ProblemSpec::Cloth { n_steps, .. } => {
                *n_steps = size
            }
            ProblemSpec::Random { n_x, n_p, .. } => {
                *n_x = size;
                *n_p = size;
            }
            ProblemSpec::QuadraticToy | ProblemSpec::ScalarCubic => {
                return Err(BenchError::Config(format!(
                    "{} has a fixed size",
                    self.name()
                )));
            }
        }
        Ok(out)
    }
}

/// Sizes and tolerances of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub random_instances: usize,
    pub random_n_x: (usize, usize),
    pub random_n_p: (usize, usize),
    /// points per benchmark taken from a short optimizer run
    pub iterates: usize,
    pub spring_bar: (usize, usize),
    pub car_steps: usize,
    pub cloth_side: usize,
    pub cloth_steps: usize,
    pub newton_points: usize,
    pub fd_points: usize,
    pub fd_steps: Vec<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            random_instances: 100,
            random_n_x: (5, 50),
            random_n_p: (2, 30),
            iterates: 5,
            spring_bar: (16, 4),
            car_steps: 500,
            cloth_side: 5,
            cloth_steps: 20,
            newton_points: 20,
            fd_points: 5,
            fd_steps: vec![1e-4, 5e-5, 2.5e-5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<String>,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::grad_tol")]
    pub grad_tol: f64,
    #[serde(default)]
    pub cg_eta: Option<f64>,
    /// sizes for `scaling`, see [`ProblemSpec::resized`]
    #[serde(default)]
    pub sweep: Vec<usize>,
    #[serde(default = "defaults::repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifySpec,
}

impl Default for BenchSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl BenchSpec {
    /// Parses JSON, reporting the offending field path and line on error.
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            BenchError::Config(format!(
                "line {} column {}: field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn problem(&self) -> Result<&ProblemSpec, BenchError> {
        self.problem
            .as_ref()
            .ok_or_else(|| BenchError::Config("config has no `problem` section".into()))
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>, BenchError> {
        if self.methods.is_empty() {
            return Err(BenchError::Config("`methods` is empty".into()));
        }
        self.methods
            .iter()
            .map(|m| m.parse::<Method>().map_err(BenchError::UnknownMethod))
            .collect()
    }

    pub fn optimizer_config(&self, method: Method) -> OptimizerConfig {
        let mut cfg = OptimizerConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ..OptimizerConfig::with_method(method)
        };
        if let Some(eta) = self.cg_eta {
            cfg.cg_eta = eta;
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let s = BenchSpec::from_json(r#"{"problem": {"spring_bar": {"nw": 8}}}"#).unwrap();
        assert_eq!(
            s.problem,
            Some(ProblemSpec::SpringBar {
                nw: 8,
                nh: 4,
                w_r: 0.0,
                stiffness: None
            })
        );
        assert_eq!(s.repetitions, 5);
        assert_eq!(s.verify, VerifySpec::default());
    }

    #[test]
    fn errors_name_the_field_and_line() {
        let err = BenchSpec::from_json("{\n  \"max_iters\": \"many\"\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("max_iters") && msg.contains("line 2"), "{msg}");
        let err = BenchSpec::from_json(r#"{"problem": {"car": {"steps": 3}}}"#).unwrap_err();
        assert!(err.to_string().contains("steps"), "{err}");
        let err =
            BenchSpec::from_json("{\"problem\": {\n\"spring_bar\": {\"nw\": -1}}}").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("problem.spring_bar.nw") && msg.contains("line 2"),
            "{msg}"
        );
        let toy = BenchSpec::from_json(r#"{"problem": "quadratic_toy"}"#).unwrap();
        assert_eq!(toy.problem, Some(ProblemSpec::QuadraticToy));
    }

    #[test]
    fn unknown_method_lists_valid_ones() {
        let s = BenchSpec::from_json(r#"{"methods": ["sgn", "newton"]}"#).unwrap();
        let msg = s.parsed_methods().unwrap_err().to_string();
        assert!(msg.contains("newton") && msg.contains("cg_gn"), "{msg}");
    }

    #[test]
    fn sweep_sizes_map_to_problem_dimensions() {
        let bar = ProblemSpec::SpringBar {
            nw: 2,
            nh: 1,
            w_r: 0.0,
            stiffness: None,
        };
        for n_p in [32, 128, 512] {
            let p = bar.resized(n_p).unwrap().build(0).unwrap();
            assert_eq!((p.n_p(), p.n_x()), (n_p, n_p));
        }
        assert!(bar.resized(33).is_err());
        let car = ProblemSpec::Car {
            n_steps: 1,
            target: None,
            v_max: None,
            s_max: None,
        };
        assert_eq!(car.resized(7).unwrap().build(0).unwrap().n_p(), 14);
    }

    #[test]
    fn same_seed_builds_identical_random_instances() {
        let spec = ProblemSpec::Random {
            n_x: 12,
            n_p: 5,
            density: 0.3,
        };
        let (a, b) = (spec.build(3).unwrap(), spec.build(3).unwrap());
        let p = a.initial_parameters();
        assert_eq!(p, b.initial_parameters());
        let x = a.solve_equilibrium(&p, None).unwrap();
        assert_eq!(x, b.solve_equilibrium(&p, None).unwrap());
    }
}
