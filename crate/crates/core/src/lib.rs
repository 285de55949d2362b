//! Least-squares support vector machines with Nyström features for
//! ordinary differential equations.
//!
//! The crate trains an approximate solution `y(t) = omega . phi(t) + b` of a
//! linear or nonlinear ODE on a grid, where `phi` is a Nyström feature map
//! of an RBF kernel built from `m` landmarks. Linear problems reduce to one
//! symmetric KKT solve; nonlinear problems are solved by Newton's method on
//! the stationarity conditions of the Lagrangian.
//!
//! ```no_run
//! use lssvm_ode::harness::{run, RunConfig};
//!
//! let cfg = RunConfig::defaults(2).unwrap();
//! let result = run(&cfg).unwrap();
//! println!("MAE {:.3e}", result.metrics.unwrap().mae);
//! ```

pub mod baselines;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod linear_solver;
pub mod metrics;
pub mod nonlinear_solver;
pub mod nystrom;
pub mod ode_model;
pub mod pipeline;

pub use error::{Error, Result};
pub use harness::{run, RunConfig, RunResult, SolverKind, StrategyKind};
pub use kernel::RbfKernel;
pub use linear_solver::PrimalModel;
pub use metrics::{compute_errors, ErrorMetrics, Timings};
pub use nystrom::{NystromFeatureMap, SamplingStrategy};
pub use ode_model::{catalog, problem, BenchmarkProblem, OdeSpec};
pub use pipeline::{fit, Fit, FitConfig};
