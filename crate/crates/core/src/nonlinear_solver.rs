//! Newton iteration on the primal KKT system of a nonlinear ODE
//! `y^(p) = f(t, y, y', ..., y^(p-1))`.
//!
//! Unknowns are `x = [omega (m_eff), b, lambda (one per condition), y_i]`
//! with one auxiliary `y_i` per constraint point. With
//! `s_i = [y_i, psi'_i omega, ..., psi^(p-1)_i omega]`,
//! `g_i = psi^(p)_i omega - f(t_i, s_i)` and `r_i = y_i - psi_i omega - b`,
//! the Lagrangian is
//!
//! ```text
//! L = 1/2 |omega|^2 + gamma/2 sum g_i^2 + gamma/2 sum r_i^2
//!     + sum_mu lambda_mu (c_mu omega + beta_mu b - v_mu)
//! ```
//!
//! and `F(x) = grad L`. The Jacobian is the (symmetric) Hessian of `L`.

use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NewtonFailure, Result};
use crate::kernel::MAX_DERIV_ORDER;
use crate::linear_solver::{condition_rows, lu_solve, mat_vec, PrimalModel};
use crate::nystrom::NystromFeatureMap;
use crate::ode_model::{ConditionKind, Conditions, NonlinearOdeSpec};

pub const DIVERGENCE_LIMIT: f64 = 1e12;
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Damping {
    None,
    /// Shrink the step while `|F|` grows.
    Backtracking { shrink: f64, max_halvings: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JacobianMode {
    Analytic,
    /// Central differences with step `step * (1 + |x_j|)`.
    FiniteDifference { step: f64 },
    /// Drops the second-order terms of `f`.
    GaussNewton,
}

/// Leading iterations that use the Gauss-Newton matrix before switching to
/// the exact Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarmStart {
    None,
    /// Switch once a step shrinks `|F|_inf` by `contraction` or better, or
    /// after `max_steps`.
    GaussNewton { contraction: f64, max_steps: usize },
}

impl WarmStart {
    pub const DEFAULT: WarmStart = WarmStart::GaussNewton {
        contraction: 1e-2,
        max_steps: 20,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: Damping,
    pub jacobian: JacobianMode,
    pub warm_start: WarmStart,
}

impl NewtonOptions {
    /// Tolerance `1e-10 (1 + gamma)` on `|F|_inf`, undamped, analytic Jacobian.
    pub fn for_gamma(gamma: f64, max_iters: usize) -> Self {
        Self {
            max_iters,
            tol: default_tol(gamma),
            damping: Damping::None,
            jacobian: JacobianMode::Analytic,
            warm_start: WarmStart::DEFAULT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if let Damping::Backtracking { shrink, .. } = self.damping {
            if !(shrink > 0.0 && shrink < 1.0) {
                return Err(Error::invalid("shrink", "must lie in (0, 1)"));
            }
        }
        if let WarmStart::GaussNewton { contraction, .. } = self.warm_start {
            if !(contraction > 0.0 && contraction < 1.0) {
                return Err(Error::invalid("contraction", "must lie in (0, 1)"));
            }
        }
        if let JacobianMode::FiniteDifference { step } = self.jacobian {
            if !(step > 0.0) {
                return Err(Error::invalid("step", "must be positive"));
            }
        }
        Ok(())
    }
}

pub fn default_tol(gamma: f64) -> f64 {
    1e-10 * (1.0 + gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonState {
    pub omega: Vec<f64>,
    pub bias: f64,
    pub multipliers: Vec<f64>,
    pub y_aux: Vec<f64>,
    pub iteration: usize,
    pub residual_norm: f64,
}

impl NewtonState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.omega.len() + 1 + self.multipliers.len() + self.y_aux.len());
        x.extend_from_slice(&self.omega);
        x.push(self.bias);
        x.extend_from_slice(&self.multipliers);
        x.extend_from_slice(&self.y_aux);
        x
    }

    pub fn from_vec(x: &[f64], m: usize, nc: usize) -> Self {
        Self {
            omega: x[..m].to_vec(),
            bias: x[m],
            multipliers: x[m + 1..m + 1 + nc].to_vec(),
            y_aux: x[m + 1 + nc..].to_vec(),
            iteration: 0,
            residual_norm: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonTrace {
    /// `|F(x_k)|_inf` for `k = 0, 1, ...`; entry 0 is the initial guess.
    pub residuals: Vec<f64>,
    /// `|x_{k+1} - x_k|_inf` per accepted step.
    pub step_norms: Vec<f64>,
    /// Leading steps taken with the Gauss-Newton matrix.
    #[serde(default)]
    pub gauss_newton_steps: usize,
    pub converged: bool,
}

impl NewtonTrace {
    /// Newton steps taken.
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }
}

/// Residual and Jacobian of the stacked KKT function.
pub trait KktFunction {
    fn len(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<Mat<f64>>;
    /// Jacobian without the terms weighted by the ODE residual `g`.
    fn gauss_newton(&self, x: &[f64]) -> Result<Mat<f64>>;
}

/// Everything that does not change between Newton iterations.
pub struct KktLayout {
    pub points: Vec<f64>,
    pub gamma: f64,
    pub m: usize,
    /// `psi[j]` holds `phi^(j)` at the constraint points, `j = 0..=p`.
    pub psi: Vec<Mat<f64>>,
    pub cond_rows: Mat<f64>,
    pub cond_bias: Vec<f64>,
    pub cond_values: Vec<f64>,
}

impl KktLayout {
    pub fn new(order: usize, cond: &Conditions, map: &NystromFeatureMap, grid: &[f64], gamma: f64) -> Result<Self> {
        if order == 0 || order > MAX_DERIV_ORDER {
            return Err(Error::UnsupportedOrder {
                order,
                max: MAX_DERIV_ORDER,
            });
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
        }
        cond.validate(order)?;
        let points = cond.constraint_points(grid).to_vec();
        if points.is_empty() {
            return Err(Error::invalid("grid", "no constraint points"));
        }
        let psi = (0..=order)
            .map(|j| map.feature_matrix(j, &points))
            .collect::<Result<Vec<_>>>()?;
        let (cond_rows, cond_bias) = condition_rows(map, cond)?;
        Ok(Self {
            points,
            gamma,
            m: map.m_eff(),
            psi,
            cond_rows,
            cond_bias,
            cond_values: cond.items.iter().map(|c| c.value).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.cond_values.len()
    }

    pub fn len(&self) -> usize {
        self.m + 1 + self.n_conditions() + self.n_points()
    }

    fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], f64, &'x [f64], &'x [f64]) {
        let m = self.m;
        let nc = self.n_conditions();
        (&x[..m], x[m], &x[m + 1..m + 1 + nc], &x[m + 1 + nc..])
    }

    /// `psi[j] omega` for every order.
    fn derivative_values(&self, omega: &[f64]) -> Vec<Vec<f64>> {
        self.psi.iter().map(|p| mat_vec(p, omega)).collect()
    }

    /// Blocks shared by every residual: `Y_b` and the condition rows, plus
    /// the `omega + C^T lambda - gamma Psi^T r` part of `Y_omega`.
    fn common_residual(&self, omega: &[f64], b: f64, lambda: &[f64], r: &[f64]) -> Vec<f64> {
        let m = self.m;
        let nc = self.n_conditions();
        let g = self.gamma;
        let mut out = vec![0.0; self.len()];
        let psit_r = mat_vec(&self.psi[0].transpose().to_owned(), r);
        for k in 0..m {
            let mut acc = omega[k] - g * psit_r[k];
            for mu in 0..nc {
                acc += lambda[mu] * self.cond_rows[(mu, k)];
            }
            out[k] = acc;
        }
        out[m] = -g * r.iter().sum::<f64>()
            + (0..nc).map(|mu| lambda[mu] * self.cond_bias[mu]).sum::<f64>();
        let c_omega = mat_vec(&self.cond_rows, omega);
        for mu in 0..nc {
            out[m + 1 + mu] = c_omega[mu] + self.cond_bias[mu] * b - self.cond_values[mu];
        }
        out
    }

    /// Hessian blocks that do not depend on `f`: identity plus
    /// `gamma Psi^T Psi`, bias and condition couplings, and the `r` parts of
    /// the `y` rows.
    fn common_jacobian(&self) -> Mat<f64> {
        let m = self.m;
        let nc = self.n_conditions();
        let n = self.n_points();
        let g = self.gamma;
        let side = self.len();
        let mut jac = Mat::<f64>::zeros(side, side);
        let ptp = self.psi[0].transpose() * &self.psi[0];
        for i in 0..m {
            for j in 0..m {
                jac[(i, j)] = g * ptp[(i, j)];
            }
            jac[(i, i)] += 1.0;
        }
        for k in 0..m {
            let col_sum: f64 = (0..n).map(|i| self.psi[0][(i, k)]).sum();
            jac[(k, m)] = g * col_sum;
            jac[(m, k)] = g * col_sum;
            for mu in 0..nc {
                jac[(k, m + 1 + mu)] = self.cond_rows[(mu, k)];
                jac[(m + 1 + mu, k)] = self.cond_rows[(mu, k)];
            }
        }
        jac[(m, m)] = g * n as f64;
        for mu in 0..nc {
            jac[(m, m + 1 + mu)] = self.cond_bias[mu];
            jac[(m + 1 + mu, m)] = self.cond_bias[mu];
        }
        let y0 = m + 1 + nc;
        for i in 0..n {
            jac[(m, y0 + i)] = -g;
            jac[(y0 + i, m)] = -g;
            for k in 0..m {
                jac[(k, y0 + i)] = -g * self.psi[0][(i, k)];
                jac[(y0 + i, k)] = -g * self.psi[0][(i, k)];
            }
            jac[(y0 + i, y0 + i)] = g;
        }
        jac
    }
}

/// KKT function for a general nonlinear spec of any supported order.
pub struct GenericKkt<'a> {
    pub spec: &'a NonlinearOdeSpec,
    pub layout: KktLayout,
}

impl<'a> GenericKkt<'a> {
    pub fn new(spec: &'a NonlinearOdeSpec, cond: &Conditions, map: &NystromFeatureMap, grid: &[f64], gamma: f64) -> Result<Self> {
        if spec.partials.is_none() {
            return Err(Error::PartialsMissing);
        }
        Ok(Self {
            spec,
            layout: KktLayout::new(spec.order, cond, map, grid, gamma)?,
        })
    }

    fn states(&self, y: &[f64], dv: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let p = self.layout.order();
        (0..y.len())
            .map(|i| {
                let mut s = Vec::with_capacity(p);
                s.push(y[i]);
                for dj in dv.iter().take(p).skip(1) {
                    s.push(dj[i]);
                }
                s
            })
            .collect()
    }

    /// `g`, `r`, the gradients of `f` and the states, per constraint point.
    fn pointwise(&self, x: &[f64]) -> Result<Pointwise> {
        let lay = &self.layout;
        let p = lay.order();
        let (omega, b, _, y) = lay.split(x);
        let dv = lay.derivative_values(omega);
        let states = self.states(y, &dv);
        let grad_fn = self.spec.partials.as_ref().ok_or(Error::PartialsMissing)?;
        let mut g = Vec::with_capacity(y.len());
        let mut r = Vec::with_capacity(y.len());
        let mut grads = Vec::with_capacity(y.len());
        for (i, s) in states.iter().enumerate() {
            let t = lay.points[i];
            g.push(dv[p][i] - (self.spec.rhs)(t, s));
            r.push(y[i] - dv[0][i] - b);
            let mut gr = vec![0.0; p];
            grad_fn(t, s, &mut gr);
            grads.push(gr);
        }
        Ok(Pointwise { g, r, grads, states })
    }

    /// `G = Psi^(p) - sum_{j>=1} diag(df/ds_j) Psi^(j)`.
    fn g_matrix(&self, grads: &[Vec<f64>]) -> Mat<f64> {
        let lay = &self.layout;
        let p = lay.order();
        let mut gm = lay.psi[p].clone();
        for j in 1..p {
            for k in 0..lay.m {
                for i in 0..lay.n_points() {
                    gm[(i, k)] -= grads[i][j] * lay.psi[j][(i, k)];
                }
            }
        }
        gm
    }

    pub fn lagrangian(&self, x: &[f64]) -> Result<f64> {
        let lay = &self.layout;
        let (omega, b, lambda, _) = lay.split(x);
        let pw = self.pointwise(x)?;
        let c_omega = mat_vec(&lay.cond_rows, omega);
        let mut l = 0.5 * omega.iter().map(|v| v * v).sum::<f64>();
        l += 0.5 * lay.gamma * pw.g.iter().map(|v| v * v).sum::<f64>();
        l += 0.5 * lay.gamma * pw.r.iter().map(|v| v * v).sum::<f64>();
        for mu in 0..lay.n_conditions() {
            l += lambda[mu] * (c_omega[mu] + lay.cond_bias[mu] * b - lay.cond_values[mu]);
        }
        Ok(l)
    }

    fn finite_difference_jacobian(&self, x: &[f64], step: f64) -> Result<Mat<f64>> {
        let n = x.len();
        let mut jac = Mat::<f64>::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = step * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            let fp = self.residual(&xp)?;
            xp[j] = x[j] - h;
            let fm = self.residual(&xp)?;
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    pub fn jacobian_with(&self, x: &[f64], mode: JacobianMode) -> Result<Mat<f64>> {
        match mode {
            JacobianMode::Analytic => self.jacobian(x),
            JacobianMode::FiniteDifference { step } => self.finite_difference_jacobian(x, step),
            JacobianMode::GaussNewton => self.gauss_newton(x),
        }
    }
}

struct Pointwise {
    g: Vec<f64>,
    r: Vec<f64>,
    grads: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
}

impl KktFunction for GenericKkt<'_> {
    fn len(&self) -> usize {
        self.layout.len()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lay = &self.layout;
        let (omega, b, lambda, _) = lay.split(x);
        let pw = self.pointwise(x)?;
        let mut out = lay.common_residual(omega, b, lambda, &pw.r);
        let gm = self.g_matrix(&pw.grads);
        let gt_g = mat_vec(&gm.transpose().to_owned(), &pw.g);
        for k in 0..lay.m {
            out[k] += lay.gamma * gt_g[k];
        }
        let y0 = lay.m + 1 + lay.n_conditions();
        for i in 0..lay.n_points() {
            out[y0 + i] = lay.gamma * (pw.r[i] - pw.grads[i][0] * pw.g[i]);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "KKT residual".into(),
            });
        }
        Ok(out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat<f64>> {
        self.hessian(x, true)
    }

    fn gauss_newton(&self, x: &[f64]) -> Result<Mat<f64>> {
        self.hessian(x, false)
    }
}

impl GenericKkt<'_> {
    fn hessian(&self, x: &[f64], curvature: bool) -> Result<Mat<f64>> {
        let lay = &self.layout;
        let p = lay.order();
        let m = lay.m;
        let n = lay.n_points();
        let gam = lay.gamma;
        let pw = self.pointwise(x)?;
        let gm = self.g_matrix(&pw.grads);
        let mut hess = vec![vec![0.0; p * p]; n];
        if curvature {
            let hess_fn = self.spec.second_partials.as_ref().ok_or(Error::PartialsMissing)?;
            for i in 0..n {
                hess_fn(lay.points[i], &pw.states[i], &mut hess[i]);
            }
        }

        let mut jac = lay.common_jacobian();
        let gtg = gm.transpose() * &gm;
        for a in 0..m {
            for c in 0..m {
                jac[(a, c)] += gam * gtg[(a, c)];
            }
        }
        // - gamma sum_i g_i sum_{j,k>=1} H_jk psi^(j)_i^T psi^(k)_i
        for j in 1..p {
            for k in 1..p {
                let w: Vec<f64> = (0..n).map(|i| pw.g[i] * hess[i][j * p + k]).collect();
                if w.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let scaled = Mat::from_fn(n, m, |i, c| w[i] * lay.psi[k][(i, c)]);
                let block = lay.psi[j].transpose() * &scaled;
                for a in 0..m {
                    for c in 0..m {
                        jac[(a, c)] -= gam * block[(a, c)];
                    }
                }
            }
        }
        let y0 = m + 1 + lay.n_conditions();
        for i in 0..n {
            let g0 = pw.grads[i][0];
            for a in 0..m {
                let mut v = -gam * g0 * gm[(i, a)];
                for j in 1..p {
                    v -= gam * pw.g[i] * hess[i][j * p] * lay.psi[j][(i, a)];
                }
                jac[(a, y0 + i)] += v;
                jac[(y0 + i, a)] += v;
            }
            jac[(y0 + i, y0 + i)] += gam * (g0 * g0 - hess[i][0] * pw.g[i]);
        }
        if (0..jac.nrows()).any(|i| !jac[(i, i)].is_finite()) {
            return Err(Error::NonFinite {
                context: "KKT Jacobian".into(),
            });
        }
        Ok(jac)
    }
}

/// First-order residual `[Y1; Y2; Y3; Y4]`: stationarity in `omega`, `b`,
/// the initial condition, and stationarity in the auxiliary `y_i`.
pub fn residual_first_order(
    state: &NewtonState,
    spec: &NonlinearOdeSpec,
    cond: &Conditions,
    map: &NystromFeatureMap,
    grid: &[f64],
    gamma: f64,
) -> Result<Vec<f64>> {
    if spec.order != 1 {
        return Err(Error::UnsupportedOrder {
            order: spec.order,
            max: 1,
        });
    }
    GenericKkt::new(spec, cond, map, grid, gamma)?.residual(&state.to_vec())
}

pub fn jacobian_first_order(
    state: &NewtonState,
    spec: &NonlinearOdeSpec,
    cond: &Conditions,
    map: &NystromFeatureMap,
    grid: &[f64],
    gamma: f64,
) -> Result<Mat<f64>> {
    if spec.order != 1 {
        return Err(Error::UnsupportedOrder {
            order: spec.order,
            max: 1,
        });
    }
    GenericKkt::new(spec, cond, map, grid, gamma)?.jacobian(&state.to_vec())
}

/// Closed-form blocks for `y'' = -y + 2 y'^2 / y`. With `d = psi' omega`,
/// `g = psi'' omega - 2 d^2 / y + y`, `h = 1 + 2 d^2 / y^2` and
/// `G = psi'' - 4 diag(d / y) psi'`:
///
/// ```text
/// Y1 = omega + g G^T g - g psi^T r + C^T lambda
/// Y5 = g h * g + g r
/// dY1/domega = I + g G^T G - 4 g psi'^T diag(g / y) psi' + g psi^T psi
/// dY1/dy     = g G^T diag(h) + 4 g psi'^T diag(g d / y^2) - g psi^T
/// dY5/dy     = g (h^2 - 4 d^2 g / y^3 + 1)
/// ```
pub struct Problem15Kkt {
    pub layout: KktLayout,
}

impl Problem15Kkt {
    pub fn new(cond: &Conditions, map: &NystromFeatureMap, grid: &[f64], gamma: f64) -> Result<Self> {
        Ok(Self {
            layout: KktLayout::new(2, cond, map, grid, gamma)?,
        })
    }

    fn parts(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let lay = &self.layout;
        let (omega, b, _, y) = lay.split(x);
        let dv = lay.derivative_values(omega);
        let n = lay.n_points();
        let d = dv[1].clone();
        let g: Vec<f64> = (0..n).map(|i| dv[2][i] - 2.0 * d[i] * d[i] / y[i] + y[i]).collect();
        let h: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * d[i] * d[i] / (y[i] * y[i])).collect();
        let r: Vec<f64> = (0..n).map(|i| y[i] - dv[0][i] - b).collect();
        (d, g, h, r)
    }

    fn g_omega(&self, x: &[f64], d: &[f64]) -> Mat<f64> {
        let lay = &self.layout;
        let y = lay.split(x).3;
        Mat::from_fn(lay.n_points(), lay.m, |i, k| {
            lay.psi[2][(i, k)] - 4.0 * d[i] / y[i] * lay.psi[1][(i, k)]
        })
    }
}

impl KktFunction for Problem15Kkt {
    fn len(&self) -> usize {
        self.layout.len()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lay = &self.layout;
        let (omega, b, lambda, _) = lay.split(x);
        let (d, g, h, r) = self.parts(x);
        let mut out = lay.common_residual(omega, b, lambda, &r);
        let gw = self.g_omega(x, &d);
        let gt_g = mat_vec(&gw.transpose().to_owned(), &g);
        for k in 0..lay.m {
            out[k] += lay.gamma * gt_g[k];
        }
        let y0 = lay.m + 1 + lay.n_conditions();
        for i in 0..lay.n_points() {
            out[y0 + i] = lay.gamma * (h[i] * g[i] + r[i]);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "KKT residual".into(),
            });
        }
        Ok(out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat<f64>> {
        self.hessian(x, true)
    }

    fn gauss_newton(&self, x: &[f64]) -> Result<Mat<f64>> {
        self.hessian(x, false)
    }
}

impl Problem15Kkt {
    fn hessian(&self, x: &[f64], curvature: bool) -> Result<Mat<f64>> {
        let lay = &self.layout;
        let m = lay.m;
        let n = lay.n_points();
        let gam = lay.gamma;
        let y = lay.split(x).3;
        let (d, mut g, h, _) = self.parts(x);
        let gw = self.g_omega(x, &d);
        if !curvature {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut jac = lay.common_jacobian();
        let gtg = gw.transpose() * &gw;
        let scaled = Mat::from_fn(n, m, |i, k| g[i] / y[i] * lay.psi[1][(i, k)]);
        let curv = lay.psi[1].transpose() * &scaled;
        for a in 0..m {
            for c in 0..m {
                jac[(a, c)] += gam * gtg[(a, c)] - 4.0 * gam * curv[(a, c)];
            }
        }
        let y0 = m + 1 + lay.n_conditions();
        for i in 0..n {
            let yi = y[i];
            for a in 0..m {
                let v = gam * gw[(i, a)] * h[i] + 4.0 * gam * lay.psi[1][(i, a)] * g[i] * d[i] / (yi * yi);
                jac[(a, y0 + i)] += v;
                jac[(y0 + i, a)] += v;
            }
            jac[(y0 + i, y0 + i)] += gam * (h[i] * h[i] - 4.0 * d[i] * d[i] * g[i] / (yi * yi * yi));
        }
        if (0..jac.nrows()).any(|i| !jac[(i, i)].is_finite()) {
            return Err(Error::NonFinite {
                context: "KKT Jacobian".into(),
            });
        }
        Ok(jac)
    }
}

/// `omega = 0`, `lambda = 0`, `b` = first value condition (IVP) or the mean
/// of the value conditions (BVP), every `y_i = b`.
pub fn initial_guess(layout: &KktLayout, cond: &Conditions) -> Vec<f64> {
    let values: Vec<f64> = cond.items.iter().filter(|c| c.order == 0).map(|c| c.value).collect();
    let b = match (cond.kind, values.first()) {
        (_, None) => 0.0,
        (ConditionKind::Initial, Some(&v)) => v,
        (ConditionKind::Boundary, Some(_)) => values.iter().sum::<f64>() / values.len() as f64,
    };
    let mut x = vec![0.0; layout.len()];
    let m = layout.m;
    x[m] = b;
    for v in x.iter_mut().skip(m + 1 + layout.n_conditions()) {
        *v = b;
    }
    x
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

fn to_model(x: &[f64], layout: &KktLayout, map: &Arc<NystromFeatureMap>) -> Result<PrimalModel> {
    let (omega, b, lambda, _) = layout.split(x);
    PrimalModel::new(omega.to_vec(), b, lambda.to_vec(), Arc::clone(map))
}

/// Newton loop `J dx = -F`, optionally backtracking on `|F|_inf`, after an
/// optional Gauss-Newton warm start.
pub fn newton<F: KktFunction + ?Sized>(
    func: &F,
    jacobian: &dyn Fn(&[f64]) -> Result<Mat<f64>>,
    x0: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, NewtonTrace)> {
    opts.validate()?;
    let mut x = x0;
    let mut f = func.residual(&x)?;
    let mut norm = inf_norm(&f);
    let mut trace = NewtonTrace {
        residuals: vec![norm],
        ..Default::default()
    };
    let mut warming = matches!(opts.warm_start, WarmStart::GaussNewton { .. });
    for iteration in 1..=opts.max_iters {
        if norm <= opts.tol {
            break;
        }
        let jac = if warming { func.gauss_newton(&x)? } else { jacobian(&x)? };
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = lu_solve(&jac, &rhs)?;
        let mut alpha = 1.0;
        let mut halvings = 0;
        let (x_new, f_new, norm_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            let attempt = func.residual(&cand);
            let (fc, nc) = match attempt {
                Ok(fc) => {
                    let nc = inf_norm(&fc);
                    (Some(fc), nc)
                }
                Err(_) => (None, f64::INFINITY),
            };
            let retry = match opts.damping {
                Damping::Backtracking { shrink, max_halvings } if !(nc <= norm) && halvings < max_halvings => {
                    alpha *= shrink;
                    halvings += 1;
                    true
                }
                _ => false,
            };
            if !retry {
                match fc {
                    Some(fc) => break (cand, fc, nc),
                    None => {
                        return Err(Error::Divergence {
                            iteration,
                            residual: f64::INFINITY,
                        })
                    }
                }
            }
        };
        if !norm_new.is_finite() || norm_new > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                iteration,
                residual: norm_new,
            });
        }
        let step = x_new
            .iter()
            .zip(&x)
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        trace.step_norms.push(step);
        trace.residuals.push(norm_new);
        if warming {
            trace.gauss_newton_steps += 1;
            if let WarmStart::GaussNewton { contraction, max_steps } = opts.warm_start {
                warming = norm_new > contraction * norm && trace.gauss_newton_steps < max_steps;
            }
        }
        x = x_new;
        f = f_new;
        norm = norm_new;
    }
    trace.converged = norm <= opts.tol;
    Ok((x, trace))
}

fn finish(
    x: Vec<f64>,
    trace: NewtonTrace,
    layout: &KktLayout,
    map: &Arc<NystromFeatureMap>,
) -> Result<(PrimalModel, NewtonTrace, NewtonState)> {
    let model = to_model(&x, layout, map)?;
    if !trace.converged {
        return Err(Error::MaxItersExceeded(Box::new(NewtonFailure { model, trace })));
    }
    let mut state = NewtonState::from_vec(&x, layout.m, layout.n_conditions());
    state.iteration = trace.iterations();
    state.residual_norm = trace.final_residual();
    Ok((model, trace, state))
}

/// Newton solve for Problem 15 through its closed-form blocks.
pub fn solve_problem15(
    cond: &Conditions,
    map: &Arc<NystromFeatureMap>,
    grid: &[f64],
    gamma: f64,
    opts: &NewtonOptions,
) -> Result<(PrimalModel, NewtonTrace)> {
    let kkt = Problem15Kkt::new(cond, map, grid, gamma)?;
    let x0 = initial_guess(&kkt.layout, cond);
    let jac = |x: &[f64]| match opts.jacobian {
        JacobianMode::Analytic => kkt.jacobian(x),
        JacobianMode::FiniteDifference { step } => fd_jacobian(&kkt, x, step),
        JacobianMode::GaussNewton => kkt.gauss_newton(x),
    };
    let (x, trace) = newton(&kkt, &jac, x0, opts)?;
    let (model, trace, _) = finish(x, trace, &kkt.layout, map)?;
    Ok((model, trace))
}

fn fd_jacobian<F: KktFunction + ?Sized>(func: &F, x: &[f64], step: f64) -> Result<Mat<f64>> {
    let n = x.len();
    let mut jac = Mat::<f64>::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = step * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let fp = func.residual(&xp)?;
        xp[j] = x[j] - h;
        let fm = func.residual(&xp)?;
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Newton solve for any nonlinear spec. Falls back to finite-difference
/// Jacobians when second partials are absent.
pub fn solve_nonlinear(
    spec: &NonlinearOdeSpec,
    cond: &Conditions,
    map: &Arc<NystromFeatureMap>,
    grid: &[f64],
    gamma: f64,
    opts: &NewtonOptions,
) -> Result<(PrimalModel, NewtonTrace)> {
    solve_nonlinear_from(spec, cond, map, grid, gamma, opts, None).map(|(m, t, _)| (m, t))
}

/// As [`solve_nonlinear`], starting from `initial` when given.
pub fn solve_nonlinear_from(
    spec: &NonlinearOdeSpec,
    cond: &Conditions,
    map: &Arc<NystromFeatureMap>,
    grid: &[f64],
    gamma: f64,
    opts: &NewtonOptions,
    initial: Option<&NewtonState>,
) -> Result<(PrimalModel, NewtonTrace, NewtonState)> {
    let kkt = GenericKkt::new(spec, cond, map, grid, gamma)?;
    let x0 = match initial {
        Some(s) => {
            let x = s.to_vec();
            if x.len() != kkt.len() {
                return Err(Error::LengthMismatch {
                    left: x.len(),
                    right: kkt.len(),
                });
            }
            x
        }
        None => initial_guess(&kkt.layout, cond),
    };
    let mode = match (opts.jacobian, &spec.second_partials) {
        (JacobianMode::Analytic, None) => JacobianMode::FiniteDifference { step: DEFAULT_FD_STEP },
        (mode, _) => mode,
    };
    let jac = |x: &[f64]| kkt.jacobian_with(x, mode);
    let (x, trace) = newton(&kkt, &jac, x0, opts)?;
    finish(x, trace, &kkt.layout, map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Slope of `log |F_{k+1}|` against `log |F_k|`.
    pub order: f64,
    /// Median of `|F_{k+1}| / |F_k|^2` over the fitted pairs.
    pub k_estimate: f64,
    pub pairs_used: usize,
    pub sub_quadratic: bool,
}

/// Order below which convergence is flagged as sub-quadratic.
pub const QUADRATIC_THRESHOLD: f64 = 1.7;

/// Least-squares fit of the convergence order over the last (up to three)
/// consecutive residual pairs above the round-off floor.
pub fn convergence_diagnostics(trace: &NewtonTrace) -> Result<ConvergenceReport> {
    let r = &trace.residuals;
    if r.len() < 4 {
        return Err(Error::InsufficientTrace {
            reason: format!("{} residuals, need at least 4", r.len()),
        });
    }
    if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InsufficientTrace {
            reason: "non-positive or non-finite residual".into(),
        });
    }
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    let last = r.len() - 1;
    // a run still dropping fast at its end has not reached the floor
    let floor = if r[last] < 1e-2 * r[last - 1] { 0.0 } else { 100.0 * min };
    let end = r.iter().position(|&v| v <= floor).map_or(last, |k| k.saturating_sub(1));
    // pairs (r_k, r_{k+1}) with r_{k+1} above the floor and decreasing
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut k = end;
    while k >= 1 && pairs.len() < 3 {
        if r[k] < r[k - 1] {
            pairs.push((r[k - 1].ln(), r[k].ln()));
        } else {
            break;
        }
        k -= 1;
    }
    // a slope needs two pairs
    if pairs.len() < 2 {
        return Err(Error::InsufficientTrace {
            reason: "fewer than two decreasing pre-floor steps".into(),
        });
    }
    let nf = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientTrace {
            reason: "degenerate residual pairs".into(),
        });
    }
    let order = sxy / sxx;
    let mut ks: Vec<f64> = pairs.iter().map(|p| (p.1 - 2.0 * p.0).exp()).collect();
    ks.sort_by(f64::total_cmp);
    let k_estimate = ks[ks.len() / 2];
    Ok(ConvergenceReport {
        order,
        k_estimate,
        pairs_used: pairs.len(),
        sub_quadratic: order < QUADRATIC_THRESHOLD,
    })
}
