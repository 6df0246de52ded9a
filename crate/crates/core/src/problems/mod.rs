//! Benchmark problems.

pub mod car;
pub mod cloth;
pub mod random;
pub mod spring_bar;
pub mod toys;

pub use car::{CarConfig, CarControlProblem};
pub use cloth::{ClothConfig, ClothControlProblem};
pub use random::{random_instance, RandomInstanceConfig};
pub use spring_bar::{SpringBarConfig, SpringBarProblem};
pub use toys::{LinearProblem, LogBarrier, QuadraticToy, ScalarCubic};
