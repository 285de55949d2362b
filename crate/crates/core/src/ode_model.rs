//! ODE problem descriptions and the sixteen-problem benchmark catalog.
//!
//! Linear problems are written as `y^(p) = sum_k f_k(t) y^(p-k) + r(t)`,
//! nonlinear ones as `y^(p) = f(t, y, y', ..., y^(p-1))`.

use std::f64::consts::E;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MAX_DERIV_ORDER;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `f(t, state)` with `state = [y, y', ..., y^(p-1)]`.
pub type RhsFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Writes `df/dstate[j]` into `out[j]`.
pub type GradFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Writes `d2f/dstate[j]dstate[k]` row-major into `out[j * p + k]`.
pub type HessFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type StatePredicate = Arc<dyn Fn(f64, &[f64]) -> bool + Send + Sync>;
/// `y*^(k)(t)`.
pub type ReferenceFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct LinearOdeSpec {
    pub order: usize,
    /// `coeffs[k - 1]` is `f_k`.
    pub coeffs: Vec<ScalarFn>,
    pub forcing: ScalarFn,
}

#[derive(Clone)]
pub struct NonlinearOdeSpec {
    pub order: usize,
    pub rhs: RhsFn,
    pub partials: Option<GradFn>,
    pub second_partials: Option<HessFn>,
    /// States where `rhs` is smooth; used to keep derivative checks away
    /// from guarded branches.
    pub admissible: Option<StatePredicate>,
}

#[derive(Clone)]
pub enum OdeSpec {
    Linear(LinearOdeSpec),
    Nonlinear(NonlinearOdeSpec),
}

impl OdeSpec {
    pub fn order(&self) -> usize {
        match self {
            OdeSpec::Linear(s) => s.order,
            OdeSpec::Nonlinear(s) => s.order,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, OdeSpec::Linear(_))
    }

    /// Right-hand side for `y^(p)` given `state = [y, ..., y^(p-1)]`.
    pub fn highest_derivative(&self, t: f64, state: &[f64]) -> f64 {
        match self {
            OdeSpec::Linear(s) => {
                let p = s.order;
                let mut acc = (s.forcing)(t);
                for (k, f) in s.coeffs.iter().enumerate() {
                    acc += f(t) * state[p - 1 - k];
                }
                acc
            }
            OdeSpec::Nonlinear(s) => (s.rhs)(t, state),
        }
    }
}

impl fmt::Debug for OdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeSpec::Linear(s) => write!(f, "Linear(order {})", s.order),
            OdeSpec::Nonlinear(s) => write!(
                f,
                "Nonlinear(order {}, partials {}, second partials {})",
                s.order,
                s.partials.is_some(),
                s.second_partials.is_some()
            ),
        }
    }
}

/// `y^(order)(point) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub point: f64,
    pub order: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Initial,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub kind: ConditionKind,
    pub items: Vec<Condition>,
}

impl Conditions {
    /// `y^(k)(t0) = values[k]`.
    pub fn initial(t0: f64, values: &[f64]) -> Self {
        Self {
            kind: ConditionKind::Initial,
            items: values
                .iter()
                .enumerate()
                .map(|(order, &value)| Condition {
                    point: t0,
                    order,
                    value,
                })
                .collect(),
        }
    }

    pub fn boundary(items: Vec<Condition>) -> Self {
        Self {
            kind: ConditionKind::Boundary,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Grid points carrying collocation rows: the first grid point is always
    /// excluded, the last one whenever a condition sits there.
    pub fn constraint_points<'g>(&self, grid: &'g [f64]) -> &'g [f64] {
        let n = grid.len();
        if n < 2 {
            return &grid[n..];
        }
        let last = grid[n - 1];
        let tol = 1e-12 * (1.0 + last.abs());
        let ends_at_last = self.items.iter().any(|c| (c.point - last).abs() <= tol);
        if ends_at_last {
            &grid[1..n - 1]
        } else {
            &grid[1..]
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.items.len() != order {
            return Err(Error::invalid(
                "conditions",
                format!("{} conditions for an order-{order} problem", self.items.len()),
            ));
        }
        if let Some(c) = self.items.iter().find(|c| c.order >= order.max(1) || c.order > MAX_DERIV_ORDER) {
            return Err(Error::UnsupportedOrder {
                order: c.order,
                max: order.saturating_sub(1),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemDefaults {
    pub n: usize,
    pub m: usize,
    pub sigma2: f64,
    pub gamma: f64,
    pub newton_iters: Option<usize>,
}

#[derive(Clone)]
pub struct BenchmarkProblem {
    pub id: usize,
    pub name: &'static str,
    pub domain: (f64, f64),
    pub spec: OdeSpec,
    pub conditions: Conditions,
    pub reference: ReferenceFn,
    pub defaults: ProblemDefaults,
}

impl fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("spec", &self.spec)
            .field("conditions", &self.conditions)
            .field("defaults", &self.defaults)
            .finish()
    }
}

impl BenchmarkProblem {
    pub fn order(&self) -> usize {
        self.spec.order()
    }

    /// Uniform grid of `n` points over the closed domain.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        linspace(self.domain.0, self.domain.1, n)
    }

    /// `[y*, y*', ..., y*^(p-1)]` at the left end of the domain.
    pub fn initial_state(&self) -> Vec<f64> {
        (0..self.order())
            .map(|k| (self.reference)(self.domain.0, k))
            .collect()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
            v[n - 1] = b;
            v
        }
    }
}

pub fn reference_solution(problem: &BenchmarkProblem, points: &[f64]) -> Result<Vec<f64>> {
    reference_derivative(problem, 0, points)
}

pub fn reference_derivative(problem: &BenchmarkProblem, order: usize, points: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = problem.domain;
    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    if order > problem.order() {
        return Err(Error::UnsupportedOrder {
            order,
            max: problem.order(),
        });
    }
    points
        .iter()
        .map(|&t| {
            if t < lo - slack || t > hi + slack || t.is_nan() {
                Err(Error::OutOfDomain { t, lo, hi })
            } else {
                Ok((problem.reference)(t, order))
            }
        })
        .collect()
}

pub fn problem(id: usize) -> Result<BenchmarkProblem> {
    if !(1..=16).contains(&id) {
        return Err(Error::UnknownProblem(id));
    }
    Ok(catalog().swap_remove(id - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub problem: usize,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const CONDITION_TOL: f64 = 1e-10;
pub const PARTIALS_TOL: f64 = 1e-5;

/// Substitute the reference into the equation on 200 interior points, into
/// every condition, and compare analytic partials with finite differences.
pub fn validate_problem(problem: &BenchmarkProblem) -> ValidationReport {
    let p = problem.order();
    let (lo, hi) = problem.domain;
    let npts = 200;
    let interior: Vec<f64> = (0..npts)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / npts as f64)
        .collect();

    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut state = vec![0.0; p];
    for &t in &interior {
        for (k, s) in state.iter_mut().enumerate() {
            *s = (problem.reference)(t, k);
        }
        let lhs = (problem.reference)(t, p);
        let rhs = problem.spec.highest_derivative(t, &state);
        let r = (lhs - rhs).abs();
        worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
        scale = scale.max(lhs.abs());
    }
    let residual = worst / scale.max(f64::MIN_POSITIVE);
    let mut checks = vec![Check {
        name: "ode-residual".into(),
        value: residual,
        tolerance: RESIDUAL_TOL,
        passed: residual <= RESIDUAL_TOL,
    }];

    let cond_err = problem
        .conditions
        .items
        .iter()
        .map(|c| ((problem.reference)(c.point, c.order) - c.value).abs())
        .fold(0.0f64, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    checks.push(Check {
        name: "conditions".into(),
        value: cond_err,
        tolerance: CONDITION_TOL,
        passed: cond_err <= CONDITION_TOL && problem.conditions.validate(p).is_ok(),
    });

    if let OdeSpec::Nonlinear(spec) = &problem.spec {
        let err = partials_error(spec, problem, 100, 0xC0FFEE);
        checks.push(Check {
            name: "partials".into(),
            value: err,
            tolerance: PARTIALS_TOL,
            passed: err <= PARTIALS_TOL,
        });
    }
    ValidationReport {
        problem: problem.id,
        checks,
    }
}

/// Worst relative mismatch between analytic first/second partials and
/// central differences over random states near the reference trajectory.
pub fn partials_error(spec: &NonlinearOdeSpec, problem: &BenchmarkProblem, samples: usize, seed: u64) -> f64 {
    let Some(grad) = &spec.partials else {
        return f64::INFINITY;
    };
    let p = spec.order;
    let (lo, hi) = problem.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut g = vec![0.0; p];
    let mut gp = vec![0.0; p];
    let mut gm = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < samples && attempts < 100 * samples {
        attempts += 1;
        let t = lo + (hi - lo) * rng.gen_range(0.02..0.98);
        let state: Vec<f64> = (0..p)
            .map(|k| {
                let y = (problem.reference)(t, k);
                y + 0.1 * (1.0 + y.abs()) * rng.gen_range(-1.0..1.0)
            })
            .collect();
        let h = 1e-6;
        let ok = spec.admissible.as_ref().map_or(true, |adm| {
            (0..p).all(|j| {
                let mut s = state.clone();
                s[j] -= 2.0 * h * (1.0 + s[j].abs());
                let lo_ok = adm(t, &s);
                s[j] = state[j] + 2.0 * h * (1.0 + state[j].abs());
                lo_ok && adm(t, &s)
            }) && adm(t, &state)
        });
        if !ok {
            continue;
        }
        accepted += 1;
        grad(t, &state, &mut g);
        if let Some(hf) = &spec.second_partials {
            hf(t, &state, &mut hess);
        }
        for j in 0..p {
            let step = h * (1.0 + state[j].abs());
            let mut sp = state.clone();
            let mut sm = state.clone();
            sp[j] += step;
            sm[j] -= step;
            let fd = ((spec.rhs)(t, &sp) - (spec.rhs)(t, &sm)) / (2.0 * step);
            worst = worst.max(rel_err(g[j], fd));
            if spec.second_partials.is_some() {
                grad(t, &sp, &mut gp);
                grad(t, &sm, &mut gm);
                for k in 0..p {
                    let fd2 = (gp[k] - gm[k]) / (2.0 * step);
                    worst = worst.max(rel_err(hess[k * p + j], fd2));
                }
            }
        }
    }
    if accepted < samples {
        return f64::INFINITY;
    }
    worst
}

fn rel_err(exact: f64, approx: f64) -> f64 {
    let e = (exact - approx).abs() / exact.abs().max(1.0);
    if e.is_nan() { f64::INFINITY } else { e }
}

fn scalar(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

/// k-th derivative of `exp(-a t) (A cos(w t) + B sin(w t))`.
fn damped(a: f64, w: f64, mut ca: f64, mut cb: f64, t: f64, k: usize) -> f64 {
    for _ in 0..k {
        (ca, cb) = (-a * ca + w * cb, -a * cb - w * ca);
    }
    (-a * t).exp() * (ca * (w * t).cos() + cb * (w * t).sin())
}

fn defaults(n: usize, m: usize, sigma2: f64, gamma: f64, iters: Option<usize>) -> ProblemDefaults {
    ProblemDefaults {
        n,
        m,
        sigma2,
        gamma,
        newton_iters: iters,
    }
}

fn linear(order: usize, coeffs: Vec<ScalarFn>, forcing: ScalarFn) -> OdeSpec {
    OdeSpec::Linear(LinearOdeSpec {
        order,
        coeffs,
        forcing,
    })
}

const P15_BOUNDARY: f64 = 0.324027137;

pub fn catalog() -> Vec<BenchmarkProblem> {
    let mut out = Vec::with_capacity(16);

    // 1: y' + (t + q'/q) y = t^3 + 2t + t^2 q'/q, q = 1 + t + t^3
    out.push(BenchmarkProblem {
        id: 1,
        name: "first-order, time-varying coefficient",
        domain: (0.0, 3.0),
        spec: linear(
            1,
            vec![scalar(|t| -(t + (1.0 + 3.0 * t * t) / (1.0 + t + t * t * t)))],
            scalar(|t| {
                t * t * t + 2.0 * t + t * t * (1.0 + 3.0 * t * t) / (1.0 + t + t * t * t)
            }),
        ),
        conditions: Conditions::initial(0.0, &[1.0]),
        reference: Arc::new(|t, k| {
            let q = 1.0 + t + t * t * t;
            let dq = 1.0 + 3.0 * t * t;
            let g = (-t * t / 2.0).exp();
            match k {
                0 => g / q + t * t,
                1 => g * (-t / q - dq / (q * q)) + 2.0 * t,
                _ => f64::NAN,
            }
        }),
        defaults: defaults(1000, 150, 10.0, 1e7, None),
    });

    out.push(BenchmarkProblem {
        id: 2,
        name: "Dahlquist test equation",
        domain: (0.0, 10.0),
        spec: linear(1, vec![constant(-1.0)], constant(0.0)),
        conditions: Conditions::initial(0.0, &[1.0]),
        reference: Arc::new(|t, k| if k % 2 == 0 { 1.0 } else { -1.0 } * (-t).exp()),
        defaults: defaults(10000, 50, 10.0, 1e7, None),
    });

    out.push(BenchmarkProblem {
        id: 3,
        name: "Prothero-Robinson (stiff)",
        domain: (0.0, 10.0),
        spec: linear(
            1,
            vec![constant(-1000.0)],
            scalar(|t| 1000.0 * t.sin() + t.cos()),
        ),
        conditions: Conditions::initial(0.0, &[0.0]),
        reference: Arc::new(|t, k| damped(0.0, 1.0, 0.0, 1.0, t, k)),
        defaults: defaults(10000, 50, 10.0, 1e7, None),
    });

    // 4: y' = y - t / y
    out.push(BenchmarkProblem {
        id: 4,
        name: "nonlinear first-order",
        domain: (0.0, 3.0),
        spec: OdeSpec::Nonlinear(NonlinearOdeSpec {
            order: 1,
            rhs: Arc::new(|t, s| s[0] - t / s[0]),
            partials: Some(Arc::new(|t, s, g| g[0] = 1.0 + t / (s[0] * s[0]))),
            second_partials: Some(Arc::new(|t, s, h| h[0] = -2.0 * t / (s[0] * s[0] * s[0]))),
            admissible: Some(Arc::new(|_, s| s[0].abs() > 1e-3)),
        }),
        conditions: Conditions::initial(0.0, &[1.0]),
        reference: Arc::new(|t, k| {
            let y = (t + 0.5 + (2.0 * t).exp() / 2.0).sqrt();
            match k {
                0 => y,
                1 => (1.0 + (2.0 * t).exp()) / (2.0 * y),
                _ => f64::NAN,
            }
        }),
        defaults: defaults(1000, 50, 10.0, 1e6, Some(50)),
    });

    // 5: y' = y^2
    out.push(BenchmarkProblem {
        id: 5,
        name: "nonlinear first-order, quadratic",
        domain: (0.0, 1.0),
        spec: OdeSpec::Nonlinear(NonlinearOdeSpec {
            order: 1,
            rhs: Arc::new(|_, s| s[0] * s[0]),
            partials: Some(Arc::new(|_, s, g| g[0] = 2.0 * s[0])),
            second_partials: Some(Arc::new(|_, _, h| h[0] = 2.0)),
            admissible: None,
        }),
        conditions: Conditions::initial(0.0, &[-1.0]),
        reference: Arc::new(|t, k| match k {
            0 => -1.0 / (1.0 + t),
            1 => 1.0 / ((1.0 + t) * (1.0 + t)),
            _ => f64::NAN,
        }),
        defaults: defaults(600, 20, 8.0, 1e6, Some(25)),
    });

    // 6: y' = (2/t) sqrt(y - ln t) + 1/t; the square root is clamped at 0
    out.push(BenchmarkProblem {
        id: 6,
        name: "nonlinear first-order, square root",
        domain: (1.0, 1.2),
        spec: OdeSpec::Nonlinear(NonlinearOdeSpec {
            order: 1,
            rhs: Arc::new(|t, s| 2.0 / t * (s[0] - t.ln()).max(0.0).sqrt() + 1.0 / t),
            partials: Some(Arc::new(|t, s, g| {
                let u = s[0] - t.ln();
                g[0] = if u > 0.0 { 1.0 / (t * u.sqrt()) } else { 0.0 };
            })),
            second_partials: Some(Arc::new(|t, s, h| {
                let u = s[0] - t.ln();
                h[0] = if u > 0.0 { -0.5 / (t * u * u.sqrt()) } else { 0.0 };
            })),
            admissible: Some(Arc::new(|t, s| s[0] - t.ln() > 1e-4)),
        }),
        conditions: Conditions::initial(1.0, &[0.0]),
        reference: Arc::new(|t, k| {
            let l = t.ln();
            match k {
                0 => l * l + l,
                1 => (2.0 * l + 1.0) / t,
                _ => f64::NAN,
            }
        }),
        defaults: defaults(300, 20, 1.0, 1e6, Some(50)),
    });

    // 7: y'' + 0.3 y' + y = 1
    let w7 = 0.9775f64.sqrt();
    out.push(BenchmarkProblem {
        id: 7,
        name: "damped oscillator with step input",
        domain: (0.0, 20.0),
        spec: linear(2, vec![constant(-0.3), constant(-1.0)], constant(1.0)),
        conditions: Conditions::initial(0.0, &[0.0, 0.0]),
        reference: Arc::new(move |t, k| {
            let osc = damped(0.15, w7, -1.0, -0.15 / w7, t, k);
            if k == 0 { 1.0 + osc } else { osc }
        }),
        defaults: defaults(1000, 50, 1.0, 1e7, None),
    });

    // 8: y''/2 + 18 y = 0
    out.push(BenchmarkProblem {
        id: 8,
        name: "undamped free vibration",
        domain: (0.0, 2.0),
        spec: linear(2, vec![constant(0.0), constant(-36.0)], constant(0.0)),
        conditions: Conditions::initial(0.0, &[-0.5, 1.0]),
        reference: Arc::new(|t, k| damped(0.0, 6.0, -0.5, 1.0 / 6.0, t, k)),
        defaults: defaults(1000, 50, 1.0, 1e7, None),
    });

    // 9: y'' + 4y' + 4y = 0
    out.push(BenchmarkProblem {
        id: 9,
        name: "critically damped free vibration",
        domain: (0.0, 10.0),
        spec: linear(2, vec![constant(-4.0), constant(-4.0)], constant(0.0)),
        conditions: Conditions::initial(0.0, &[1.0, 1.0]),
        reference: Arc::new(|t, k| {
            // (a + b t) e^{-2t}
            let (mut a, mut b) = (1.0, 3.0);
            for _ in 0..k {
                (a, b) = (b - 2.0 * a, -2.0 * b);
            }
            (a + b * t) * (-2.0 * t).exp()
        }),
        defaults: defaults(1000, 50, 1.0, 1e7, None),
    });

    // 10: y'' + y'/5 + y = -exp(-t/5) cos(t) / 5
    out.push(BenchmarkProblem {
        id: 10,
        name: "damped oscillator with time-varying input",
        domain: (0.0, 10.0),
        spec: linear(
            2,
            vec![constant(-0.2), constant(-1.0)],
            scalar(|t| -0.2 * (-t / 5.0).exp() * t.cos()),
        ),
        conditions: Conditions::initial(0.0, &[0.0, 1.0]),
        reference: Arc::new(|t, k| damped(0.2, 1.0, 0.0, 1.0, t, k)),
        defaults: defaults(1000, 50, 1.0, 1e7, None),
    });

    // 11: y'' + y'/t + cos t + sin(t)/t = 0, singular at t = 0
    out.push(BenchmarkProblem {
        id: 11,
        name: "singular second-order BVP",
        domain: (0.0, 1.0),
        spec: linear(
            2,
            vec![scalar(|t| -1.0 / t), constant(0.0)],
            scalar(|t| -t.cos() - t.sin() / t),
        ),
        conditions: Conditions::boundary(vec![
            Condition {
                point: 0.0,
                order: 0,
                value: 1.0,
            },
            Condition {
                point: 1.0,
                order: 0,
                value: 1f64.cos(),
            },
        ]),
        reference: Arc::new(|t, k| damped(0.0, 1.0, 1.0, 0.0, t, k)),
        defaults: defaults(1000, 20, 1.0, 1e7, None),
    });

    // 12: y'' + y = 2
    let c12 = (2.0 - 1f64.cos()) / 1f64.sin();
    out.push(BenchmarkProblem {
        id: 12,
        name: "linear second-order BVP",
        domain: (0.0, 1.0),
        spec: linear(2, vec![constant(0.0), constant(-1.0)], constant(2.0)),
        conditions: Conditions::boundary(vec![
            Condition {
                point: 0.0,
                order: 0,
                value: 1.0,
            },
            Condition {
                point: 1.0,
                order: 0,
                value: 0.0,
            },
        ]),
        reference: Arc::new(move |t, k| {
            let osc = damped(0.0, 1.0, -1.0, -c12, t, k);
            if k == 0 { 2.0 + osc } else { osc }
        }),
        defaults: defaults(1000, 20, 1.0, 1e7, None),
    });

    // 13: y'' + (1 - 2t)/t y' + (t - 1)/t y = 0
    out.push(BenchmarkProblem {
        id: 13,
        name: "singular second-order BVP, exponential solution",
        domain: (0.0, 1.0),
        spec: linear(
            2,
            vec![scalar(|t| -(1.0 - 2.0 * t) / t), scalar(|t| -(t - 1.0) / t)],
            constant(0.0),
        ),
        conditions: Conditions::boundary(vec![
            Condition {
                point: 0.0,
                order: 0,
                value: 1.0,
            },
            Condition {
                point: 1.0,
                order: 0,
                value: E,
            },
        ]),
        reference: Arc::new(|t, _| t.exp()),
        defaults: defaults(1000, 20, 1.0, 1e7, None),
    });

    // 14: y'' = -y'^2 + 2 exp(-y)
    out.push(BenchmarkProblem {
        id: 14,
        name: "nonlinear second-order BVP",
        domain: (0.0, 1.0),
        spec: OdeSpec::Nonlinear(NonlinearOdeSpec {
            order: 2,
            rhs: Arc::new(|_, s| -s[1] * s[1] + 2.0 * (-s[0]).exp()),
            partials: Some(Arc::new(|_, s, g| {
                g[0] = -2.0 * (-s[0]).exp();
                g[1] = -2.0 * s[1];
            })),
            second_partials: Some(Arc::new(|_, s, h| {
                h[0] = 2.0 * (-s[0]).exp();
                h[1] = 0.0;
                h[2] = 0.0;
                h[3] = -2.0;
            })),
            admissible: None,
        }),
        conditions: Conditions::boundary(vec![
            Condition {
                point: 0.0,
                order: 0,
                value: 0.0,
            },
            Condition {
                point: 1.0,
                order: 0,
                value: 0.0,
            },
        ]),
        reference: Arc::new(|t, k| {
            let u = t * t - t + 1.0;
            let du = 2.0 * t - 1.0;
            match k {
                0 => u.ln(),
                1 => du / u,
                2 => 2.0 / u - du * du / (u * u),
                _ => f64::NAN,
            }
        }),
        defaults: defaults(200, 10, 1.0, 1e7, Some(500)),
    });

    // 15: y'' = -y + 2 y'^2 / y
    let a15 = 1.0 / (P15_BOUNDARY * 1f64.cosh());
    out.push(BenchmarkProblem {
        id: 15,
        name: "nonlinear second-order BVP, rational",
        domain: (-1.0, 1.0),
        spec: OdeSpec::Nonlinear(NonlinearOdeSpec {
            order: 2,
            rhs: Arc::new(|_, s| -s[0] + 2.0 * s[1] * s[1] / s[0]),
            partials: Some(Arc::new(|_, s, g| {
                let (y, d) = (s[0], s[1]);
                g[0] = -1.0 - 2.0 * d * d / (y * y);
                g[1] = 4.0 * d / y;
            })),
            second_partials: Some(Arc::new(|_, s, h| {
                let (y, d) = (s[0], s[1]);
                h[0] = 4.0 * d * d / (y * y * y);
                h[1] = -4.0 * d / (y * y);
                h[2] = h[1];
                h[3] = 4.0 / y;
            })),
            admissible: Some(Arc::new(|_, s| s[0].abs() > 1e-3)),
        }),
        conditions: Conditions::boundary(vec![
            Condition {
                point: -1.0,
                order: 0,
                value: P15_BOUNDARY,
            },
            Condition {
                point: 1.0,
                order: 0,
                value: P15_BOUNDARY,
            },
        ]),
        reference: Arc::new(move |t, k| {
            let sech = 1.0 / t.cosh();
            let th = t.tanh();
            match k {
                0 => sech / a15,
                1 => -sech * th / a15,
                2 => sech * (2.0 * th * th - 1.0) / a15,
                _ => f64::NAN,
            }
        }),
        defaults: defaults(300, 10, 1.0, 1e7, Some(400)),
    });

    // 16: y'''' = 120 t with Hermite end conditions
    out.push(BenchmarkProblem {
        id: 16,
        name: "fourth-order linear, Hermite conditions",
        domain: (-1.0, 1.0),
        spec: linear(
            4,
            vec![constant(0.0), constant(0.0), constant(0.0), constant(0.0)],
            scalar(|t| 120.0 * t),
        ),
        conditions: Conditions::boundary(vec![
            Condition {
                point: -1.0,
                order: 0,
                value: 1.0,
            },
            Condition {
                point: -1.0,
                order: 1,
                value: 5.0,
            },
            Condition {
                point: 1.0,
                order: 0,
                value: 3.0,
            },
            Condition {
                point: 1.0,
                order: 1,
                value: 5.0,
            },
        ]),
        reference: Arc::new(|t, k| match k {
            0 => t.powi(5) + 2.0,
            1 => 5.0 * t.powi(4),
            2 => 20.0 * t.powi(3),
            3 => 60.0 * t * t,
            4 => 120.0 * t,
            _ => 0.0,
        }),
        defaults: defaults(1000, 20, 1.0, 1e7, None),
    });

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_sixteen_problems_in_order() {
        let cat = catalog();
        assert_eq!(cat.len(), 16);
        for (i, p) in cat.iter().enumerate() {
            assert_eq!(p.id, i + 1);
            p.conditions.validate(p.order()).unwrap();
        }
        assert!(matches!(problem(0), Err(Error::UnknownProblem(0))));
        assert!(matches!(problem(17), Err(Error::UnknownProblem(17))));
    }

    #[test]
    fn defaults_follow_the_hyperparameter_table() {
        let p3 = problem(3).unwrap().defaults;
        assert_eq!((p3.n, p3.m, p3.sigma2, p3.gamma), (10000, 50, 10.0, 1e7));
        for id in 4..=6 {
            assert_eq!(problem(id).unwrap().defaults.gamma, 1e6);
        }
        let p1 = problem(1).unwrap().defaults;
        assert_eq!((p1.n, p1.m), (1000, 150));
        assert_eq!(problem(15).unwrap().defaults.newton_iters, Some(400));
        for p in catalog() {
            assert!(p.defaults.m <= p.defaults.n);
        }
    }

    #[test]
    fn every_reference_passes_the_residual_oracle() {
        for p in catalog() {
            let report = validate_problem(&p);
            assert!(report.passed(), "problem {}: {:?}", p.id, report.checks);
        }
    }

    #[test]
    fn reference_values() {
        let p2 = problem(2).unwrap();
        assert_eq!(reference_solution(&p2, &[0.0]).unwrap(), vec![1.0]);
        let p4 = problem(4).unwrap();
        assert_eq!(reference_solution(&p4, &[0.0]).unwrap(), vec![1.0]);
        let p15 = problem(15).unwrap();
        let ends = reference_solution(&p15, &[-1.0, 1.0]).unwrap();
        assert!(ends.iter().all(|v| (v - 0.324027137).abs() < 1e-15));
        let p9 = problem(9).unwrap();
        let t = 0.7;
        let y = reference_solution(&p9, &[t]).unwrap()[0];
        assert!((y - (1.0 + 3.0 * t) * (-2.0 * t).exp()).abs() < 1e-16);
        let p12 = problem(12).unwrap();
        assert!(reference_solution(&p12, &[1.0]).unwrap()[0].abs() < 1e-15);
        assert!(matches!(
            reference_solution(&p2, &[10.5]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn references_are_bit_stable() {
        let p = problem(1).unwrap();
        let grid = p.grid(257);
        let a = reference_solution(&p, &grid).unwrap();
        let b = reference_solution(&p, &grid).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn residual_on_tight_problem() {
        let report = validate_problem(&problem(2).unwrap());
        assert!(report.check("ode-residual").unwrap().value <= 1e-12);
    }

    #[test]
    fn corrupted_forcing_fails_only_the_residual_check() {
        let mut p = problem(12).unwrap();
        if let OdeSpec::Linear(spec) = &mut p.spec {
            spec.forcing = constant(2.5);
        }
        let report = validate_problem(&p);
        assert!(report.check("conditions").unwrap().passed);
        assert!(!report.check("ode-residual").unwrap().passed);
    }

    #[test]
    fn singular_problem_checked_on_open_interior() {
        let report = validate_problem(&problem(13).unwrap());
        assert!(report.passed(), "{:?}", report.checks);
    }

    #[test]
    fn constraint_points_per_condition_layout() {
        let grid = linspace(0.0, 1.0, 6);
        let ivp = problem(2).unwrap().conditions;
        assert_eq!(ivp.constraint_points(&grid), &grid[1..]);
        let bvp = problem(12).unwrap().conditions;
        assert_eq!(bvp.constraint_points(&grid), &grid[1..5]);
    }

    #[test]
    fn nonlinear_partials_match_finite_differences() {
        for id in [4, 5, 6, 14, 15] {
            let p = problem(id).unwrap();
            if let OdeSpec::Nonlinear(spec) = &p.spec {
                let err = partials_error(spec, &p, 100, 5);
                assert!(err <= PARTIALS_TOL, "problem {id}: {err}");
            }
        }
    }

    #[test]
    fn linspace_hits_endpoints() {
        let g = linspace(1.0, 1.2, 300);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[299], 1.2);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
