//! Classical fixed-step integrators and the full-feature kernel baseline.
//!
//! Order-`p` problems are integrated in companion form on the state
//! `[y, y', ..., y^(p-1)]`; trajectories report the first component.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_solver::PrimalModel;
use crate::metrics::Timings;
use crate::nonlinear_solver::NewtonOptions;
use crate::nystrom::{SamplingStrategy, DEFAULT_DROP_TOL};
use crate::ode_model::{BenchmarkProblem, ConditionKind, OdeSpec};
use crate::pipeline::{fit, FitConfig};

/// Largest grid accepted by [`full_feature_baseline`].
pub const FULL_FEATURE_LIMIT: usize = 5000;
pub const DEFAULT_AB_ORDER: usize = 4;

const AB2: [f64; 2] = [3.0 / 2.0, -1.0 / 2.0];
const AB3: [f64; 3] = [23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0];
const AB4: [f64; 4] = [55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Rk4,
    AdamsBashforth { order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub step: f64,
    pub method: Method,
}

impl StepperConfig {
    pub fn new(step: f64, method: Method) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("step", format!("must be positive, got {step}")));
        }
        if let Method::AdamsBashforth { order } = method {
            if !(2..=4).contains(&order) {
                return Err(Error::invalid("order", format!("Adams-Bashforth order must be 2..=4, got {order}")));
            }
        }
        Ok(Self { step, method })
    }

    pub fn rk4(step: f64) -> Result<Self> {
        Self::new(step, Method::Rk4)
    }

    pub fn adams_bashforth(order: usize, step: f64) -> Result<Self> {
        Self::new(step, Method::AdamsBashforth { order })
    }

    /// Step count covering `domain`; `step` must divide its length.
    pub fn steps(&self, domain: (f64, f64)) -> Result<usize> {
        let len = domain.1 - domain.0;
        if !(len > 0.0) {
            return Err(Error::invalid("domain", "must have positive length"));
        }
        let k = (len / self.step).round();
        if k < 1.0 || (k * self.step - len).abs() > 1e-12 * len.max(1.0) {
            return Err(Error::invalid(
                "step",
                format!("{} does not divide the domain length {len}", self.step),
            ));
        }
        Ok(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn derivative(spec: &OdeSpec, t: f64, s: &[f64], out: &mut [f64]) {
    let p = s.len();
    out[..p - 1].copy_from_slice(&s[1..]);
    out[p - 1] = spec.highest_derivative(t, s);
}

fn rk4_step(spec: &OdeSpec, t: f64, h: f64, s: &[f64]) -> Vec<f64> {
    let p = s.len();
    let mut k1 = vec![0.0; p];
    let mut k2 = vec![0.0; p];
    let mut k3 = vec![0.0; p];
    let mut k4 = vec![0.0; p];
    let mut tmp = vec![0.0; p];
    derivative(spec, t, s, &mut k1);
    for i in 0..p {
        tmp[i] = s[i] + 0.5 * h * k1[i];
    }
    derivative(spec, t + 0.5 * h, &tmp, &mut k2);
    for i in 0..p {
        tmp[i] = s[i] + 0.5 * h * k2[i];
    }
    derivative(spec, t + 0.5 * h, &tmp, &mut k3);
    for i in 0..p {
        tmp[i] = s[i] + h * k3[i];
    }
    derivative(spec, t + h, &tmp, &mut k4);
    (0..p)
        .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn check_finite(s: &[f64], t: f64, step: usize) -> Result<()> {
    if s.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: format!("integrator state at t = {t} (step {step})"),
        })
    }
}

/// March from `y0 = [y, ..., y^(p-1)]` at `domain.0` to `domain.1`.
pub fn integrate(spec: &OdeSpec, domain: (f64, f64), y0: &[f64], config: &StepperConfig) -> Result<Trajectory> {
    let p = spec.order();
    if y0.len() != p {
        return Err(Error::LengthMismatch { left: y0.len(), right: p });
    }
    let steps = config.steps(domain)?;
    let h = config.step;
    let time = |i: usize| if i == steps { domain.1 } else { domain.0 + h * i as f64 };
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut s = y0.to_vec();
    check_finite(&s, domain.0, 0)?;
    times.push(domain.0);
    values.push(s[0]);

    let coeffs: &[f64] = match config.method {
        Method::Rk4 => &[],
        Method::AdamsBashforth { order: 2 } => &AB2,
        Method::AdamsBashforth { order: 3 } => &AB3,
        Method::AdamsBashforth { .. } => &AB4,
    };
    // most recent derivative first
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(coeffs.len());
    for i in 0..steps {
        let t = time(i);
        let next = if coeffs.is_empty() || i + 1 < coeffs.len() {
            if !coeffs.is_empty() {
                let mut d = vec![0.0; p];
                derivative(spec, t, &s, &mut d);
                history.insert(0, d);
            }
            rk4_step(spec, t, h, &s)
        } else {
            let mut d = vec![0.0; p];
            derivative(spec, t, &s, &mut d);
            history.insert(0, d);
            history.truncate(coeffs.len());
            (0..p)
                .map(|j| s[j] + h * coeffs.iter().zip(&history).map(|(c, d)| c * d[j]).sum::<f64>())
                .collect()
        };
        check_finite(&next, time(i + 1), i + 1)?;
        s = next;
        times.push(time(i + 1));
        values.push(s[0]);
    }
    Ok(Trajectory { times, values })
}

/// Initial state for the integrators: the conditions of an IVP, or the
/// reference state at the left end for a BVP (shooting with the known slope).
pub fn initial_state(problem: &BenchmarkProblem) -> Vec<f64> {
    match problem.conditions.kind {
        ConditionKind::Initial => {
            let mut s = vec![0.0; problem.order()];
            for c in &problem.conditions.items {
                s[c.order] = c.value;
            }
            s
        }
        ConditionKind::Boundary => problem.initial_state(),
    }
}

pub fn integrate_problem(problem: &BenchmarkProblem, config: &StepperConfig) -> Result<Trajectory> {
    integrate(&problem.spec, problem.domain, &initial_state(problem), config)
}

/// Same pipeline as the Nyström runs with every grid point as a landmark.
pub fn full_feature_baseline(
    problem: &BenchmarkProblem,
    grid: &[f64],
    gamma: f64,
    sigma2: f64,
) -> Result<(PrimalModel, Timings)> {
    if !problem.spec.is_linear() {
        return Err(Error::InvalidConfig(format!(
            "the full-feature baseline covers linear problems; problem {} is nonlinear",
            problem.id
        )));
    }
    if grid.len() > FULL_FEATURE_LIMIT {
        return Err(Error::MemoryGuard {
            n: grid.len(),
            limit: FULL_FEATURE_LIMIT,
        });
    }
    let cfg = FitConfig {
        m: grid.len(),
        sigma2,
        gamma,
        strategy: SamplingStrategy::Equidistant,
        drop_tol: DEFAULT_DROP_TOL,
        newton: NewtonOptions::for_gamma(gamma, 1),
    };
    let trained = fit(problem, grid, &cfg)?;
    let start = Instant::now();
    trained.model.predict(0, grid)?;
    let timings = Timings {
        train_seconds: trained.train_seconds,
        predict_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((trained.model, timings))
}
