//! Shared train/predict path: landmarks, feature map, then the linear
//! solve or the Newton iteration. The Nyström runs and the full-feature
//! baseline both go through [`fit`].

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RbfKernel;
use crate::linear_solver::{assemble, check_kkt, solve, KktReport, PrimalModel};
use crate::nonlinear_solver::{solve_nonlinear, solve_problem15, NewtonOptions, NewtonTrace};
use crate::nystrom::{select_landmarks, NystromFeatureMap, SamplingStrategy};
use crate::ode_model::{BenchmarkProblem, OdeSpec};

/// Problem whose Newton system has closed-form blocks.
pub const EXACT_JACOBIAN_PROBLEM: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub m: usize,
    pub sigma2: f64,
    pub gamma: f64,
    pub strategy: SamplingStrategy,
    pub drop_tol: f64,
    pub newton: NewtonOptions,
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub model: PrimalModel,
    pub trace: Option<NewtonTrace>,
    pub kkt: Option<KktReport>,
    pub train_seconds: f64,
}

/// Train on `grid`. Newton runs that exhaust their budget come back as
/// [`Error::MaxItersExceeded`] carrying the last iterate.
pub fn fit(problem: &BenchmarkProblem, grid: &[f64], cfg: &FitConfig) -> Result<Fit> {
    let start = Instant::now();
    let kernel = RbfKernel::new(cfg.sigma2)?;
    let landmarks = select_landmarks(cfg.strategy, &kernel, grid, cfg.m)?;
    let map = Arc::new(NystromFeatureMap::build(kernel, &landmarks, cfg.drop_tol)?);
    match &problem.spec {
        OdeSpec::Linear(spec) => {
            let system = assemble(spec, &problem.conditions, &map, grid, cfg.gamma)?;
            let model = solve(&system, &map)?;
            let train_seconds = start.elapsed().as_secs_f64();
            let kkt = check_kkt(&model, &system)?;
            Ok(Fit {
                model,
                trace: None,
                kkt: Some(kkt),
                train_seconds,
            })
        }
        OdeSpec::Nonlinear(spec) => {
            let (model, trace) = if problem.id == EXACT_JACOBIAN_PROBLEM {
                solve_problem15(&problem.conditions, &map, grid, cfg.gamma, &cfg.newton)?
            } else {
                solve_nonlinear(spec, &problem.conditions, &map, grid, cfg.gamma, &cfg.newton)?
            };
            Ok(Fit {
                model,
                trace: Some(trace),
                kkt: None,
                train_seconds: start.elapsed().as_secs_f64(),
            })
        }
    }
}

/// Rebuild a model from stored parameters. The eigendecomposition is
/// deterministic, so the rebuilt map matches the original bit for bit.
pub fn rebuild_model(
    landmarks: &[f64],
    sigma2: f64,
    drop_tol: f64,
    omega: Vec<f64>,
    bias: f64,
) -> Result<PrimalModel> {
    let map = NystromFeatureMap::build(RbfKernel::new(sigma2)?, landmarks, drop_tol)?;
    if map.m_eff() != omega.len() {
        return Err(Error::LengthMismatch {
            left: omega.len(),
            right: map.m_eff(),
        });
    }
    PrimalModel::new(omega, bias, Vec::new(), Arc::new(map))
}
