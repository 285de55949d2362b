//! Primal KKT system for linear ODEs.
//!
//! Unknowns are `[omega (m_eff), b, lambda_1..lambda_p]`. With the collocation
//! operator `D = Psi^(p) - sum_k diag(f_k) Psi^(p-k)` over the constraint
//! points and the error `e = D omega - f_p b - r`, stationarity of
//! `1/2 |omega|^2 + gamma/2 |e|^2 + sum_mu lambda_mu (c_mu omega + beta_mu b - v_mu)`
//! gives the symmetric system
//!
//! ```text
//! [ I + g D^T D    -g D^T f_p    C^T  ] [omega ]   [  g D^T r  ]
//! [ -g f_p^T D     g f_p^T f_p   B^T  ] [  b   ] = [ -g f_p^T r]
//! [ C              B             0    ] [lambda]   [  v        ]
//! ```
//!
//! where row `mu` of `C` is `phi^(l_mu)(t_mu)` and `B_mu = 1` for value
//! conditions, `0` for derivative conditions.

use std::sync::Arc;

use faer::prelude::Solve;
use faer::{Col, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MAX_DERIV_ORDER;
use crate::nystrom::NystromFeatureMap;
use crate::ode_model::{Conditions, LinearOdeSpec};

/// Smallest accepted ratio between the smallest and largest LU pivot of the
/// equilibrated matrix.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-20;

#[derive(Debug, Clone)]
pub struct PrimalModel {
    omega: Vec<f64>,
    bias: f64,
    multipliers: Vec<f64>,
    feature_map: Arc<NystromFeatureMap>,
}

impl PrimalModel {
    pub fn new(
        omega: Vec<f64>,
        bias: f64,
        multipliers: Vec<f64>,
        feature_map: Arc<NystromFeatureMap>,
    ) -> Result<Self> {
        if omega.len() != feature_map.m_eff() {
            return Err(Error::LengthMismatch {
                left: omega.len(),
                right: feature_map.m_eff(),
            });
        }
        if omega.iter().chain(&multipliers).any(|v| !v.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite {
                context: "model parameters".into(),
            });
        }
        Ok(Self {
            omega,
            bias,
            multipliers,
            feature_map,
        })
    }

    pub fn zero(feature_map: Arc<NystromFeatureMap>, conditions: usize) -> Self {
        Self {
            omega: vec![0.0; feature_map.m_eff()],
            bias: 0.0,
            multipliers: vec![0.0; conditions],
            feature_map,
        }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn feature_map(&self) -> &Arc<NystromFeatureMap> {
        &self.feature_map
    }

    /// `omega^T phi^(ell)(t)`, plus the bias when `ell == 0`.
    pub fn predict(&self, ell: usize, points: &[f64]) -> Result<Vec<f64>> {
        predict(self, ell, points)
    }
}

pub fn predict(model: &PrimalModel, ell: usize, points: &[f64]) -> Result<Vec<f64>> {
    if points.is_empty() {
        if ell > MAX_DERIV_ORDER {
            return Err(Error::UnsupportedOrder {
                order: ell,
                max: MAX_DERIV_ORDER,
            });
        }
        return Ok(Vec::new());
    }
    let psi = model.feature_map.feature_matrix(ell, points)?;
    let offset = if ell == 0 { model.bias } else { 0.0 };
    Ok(mat_vec(&psi, &model.omega).into_iter().map(|v| v + offset).collect())
}

pub(crate) fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let xc = Col::from_fn(x.len(), |i| x[i]);
    let y = a * &xc;
    y.iter().copied().collect()
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    pub constraint_points: Vec<f64>,
    pub gamma: f64,
    pub order: usize,
    pub m_eff: usize,
    pub conditions: Conditions,
    /// Collocation operator `D`.
    pub operator: Mat<f64>,
    /// `f_p` at the constraint points (multiplies the bias).
    pub bias_coeff: Vec<f64>,
    pub forcing: Vec<f64>,
}

impl AssembledSystem {
    pub fn side(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Condition row `phi^(l)(t)` and its bias entry.
pub(crate) fn condition_rows(map: &NystromFeatureMap, cond: &Conditions) -> Result<(Mat<f64>, Vec<f64>)> {
    let m = map.m_eff();
    let mut c = Mat::<f64>::zeros(cond.len(), m);
    let mut beta = vec![0.0; cond.len()];
    for (mu, item) in cond.items.iter().enumerate() {
        let row = map.feature_deriv(item.order, item.point)?;
        for k in 0..m {
            c[(mu, k)] = row[k];
        }
        beta[mu] = if item.order == 0 { 1.0 } else { 0.0 };
    }
    Ok((c, beta))
}

pub fn assemble(
    spec: &LinearOdeSpec,
    cond: &Conditions,
    map: &NystromFeatureMap,
    grid: &[f64],
    gamma: f64,
) -> Result<AssembledSystem> {
    let p = spec.order;
    if p == 0 || p > MAX_DERIV_ORDER {
        return Err(Error::UnsupportedOrder {
            order: p,
            max: MAX_DERIV_ORDER,
        });
    }
    if spec.coeffs.len() != p {
        return Err(Error::LengthMismatch {
            left: spec.coeffs.len(),
            right: p,
        });
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid", "must be strictly increasing"));
    }
    cond.validate(p)?;
    let pts = cond.constraint_points(grid).to_vec();
    if pts.is_empty() {
        return Err(Error::invalid("grid", "no constraint points"));
    }
    let n = pts.len();
    let m = map.m_eff();

    let coeff_vals: Vec<Vec<f64>> = spec
        .coeffs
        .iter()
        .map(|f| pts.iter().map(|&t| f(t)).collect())
        .collect();
    let forcing: Vec<f64> = pts.iter().map(|&t| (spec.forcing)(t)).collect();
    if coeff_vals.iter().flatten().chain(&forcing).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "coefficient or forcing evaluated at a constraint point".into(),
        });
    }

    let mut d = map.feature_matrix(p, &pts)?;
    for k in 1..=p {
        let fk = &coeff_vals[k - 1];
        if fk.iter().all(|&v| v == 0.0) {
            continue;
        }
        let psi = map.feature_matrix(p - k, &pts)?;
        for j in 0..m {
            for i in 0..n {
                d[(i, j)] -= fk[i] * psi[(i, j)];
            }
        }
    }
    let fp = coeff_vals[p - 1].clone();

    let nc = cond.len();
    let side = m + 1 + nc;
    let mut a = Mat::<f64>::zeros(side, side);
    let dtd = d.transpose() * &d;
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = gamma * dtd[(i, j)];
        }
        a[(i, i)] += 1.0;
    }
    let dt_fp = mat_vec(&d.transpose().to_owned(), &fp);
    let dt_r = mat_vec(&d.transpose().to_owned(), &forcing);
    let fp_fp: f64 = fp.iter().map(|v| v * v).sum();
    let fp_r: f64 = fp.iter().zip(&forcing).map(|(a, b)| a * b).sum();
    for i in 0..m {
        a[(i, m)] = -gamma * dt_fp[i];
        a[(m, i)] = -gamma * dt_fp[i];
    }
    a[(m, m)] = gamma * fp_fp;

    let (c, beta) = condition_rows(map, cond)?;
    for mu in 0..nc {
        for k in 0..m {
            a[(m + 1 + mu, k)] = c[(mu, k)];
            a[(k, m + 1 + mu)] = c[(mu, k)];
        }
        a[(m + 1 + mu, m)] = beta[mu];
        a[(m, m + 1 + mu)] = beta[mu];
    }

    let mut rhs = vec![0.0; side];
    for i in 0..m {
        rhs[i] = gamma * dt_r[i];
    }
    rhs[m] = -gamma * fp_r;
    for (mu, item) in cond.items.iter().enumerate() {
        rhs[m + 1 + mu] = item.value;
    }

    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "assembled right-hand side".into(),
        });
    }
    Ok(AssembledSystem {
        matrix: a,
        rhs,
        constraint_points: pts,
        gamma,
        order: p,
        m_eff: m,
        conditions: cond.clone(),
        operator: d,
        bias_coeff: fp,
        forcing,
    })
}

/// Dense LU solve of the symmetrically equilibrated system `S A S y = S b`,
/// `x = S y`, with one step of iterative refinement.
pub(crate) fn lu_solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let r = (0..n).fold(0.0f64, |acc, j| acc.max(a[(i, j)].abs()));
            if r > 0.0 { 1.0 / r.sqrt() } else { 1.0 }
        })
        .collect();
    let sa = Mat::from_fn(n, n, |i, j| scale[i] * a[(i, j)] * scale[j]);
    let lu = sa.partial_piv_lu();
    let u = lu.U();
    let mut umax = 0.0f64;
    let mut umin = f64::INFINITY;
    for i in 0..n {
        let v = u[(i, i)].abs();
        umax = umax.max(v);
        umin = umin.min(v);
    }
    let ratio = if umax > 0.0 { umin / umax } else { 0.0 };
    if !ratio.is_finite() || ratio < SINGULAR_PIVOT_RATIO {
        return Err(Error::SingularSystem { ratio });
    }
    let sb = Col::from_fn(n, |i| scale[i] * b[i]);
    let mut y = lu.solve(&sb);
    let r = &sb - &sa * &y;
    y += lu.solve(&r);
    let x: Vec<f64> = (0..n).map(|i| scale[i] * y[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "linear solve".into(),
        });
    }
    Ok(x)
}

pub fn solve(system: &AssembledSystem, map: &Arc<NystromFeatureMap>) -> Result<PrimalModel> {
    if map.m_eff() != system.m_eff {
        return Err(Error::LengthMismatch {
            left: map.m_eff(),
            right: system.m_eff,
        });
    }
    let x = lu_solve(&system.matrix, &system.rhs)?;
    let m = system.m_eff;
    PrimalModel::new(x[..m].to_vec(), x[m], x[m + 1..].to_vec(), Arc::clone(map))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `|M x - rhs|_inf`.
    pub system_residual: f64,
    pub rhs_norm: f64,
    /// `|M|_inf`.
    pub matrix_norm: f64,
    /// `|x|_inf`.
    pub solution_norm: f64,
    /// `|y^(l_mu)(t_mu) - v_mu|` per condition.
    pub condition_residuals: Vec<f64>,
    /// Regularized collocation error `e_i` at the constraint points.
    pub ode_residuals: Vec<f64>,
}

impl KktReport {
    pub fn relative_residual(&self) -> f64 {
        self.system_residual / self.rhs_norm.max(f64::MIN_POSITIVE)
    }

    /// Normwise backward error `|M x - rhs| / (|M| |x| + |rhs|)`.
    pub fn backward_error(&self) -> f64 {
        let denom = self.matrix_norm * self.solution_norm + self.rhs_norm;
        self.system_residual / denom.max(f64::MIN_POSITIVE)
    }

    pub fn max_condition_residual(&self) -> f64 {
        self.condition_residuals.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn max_ode_residual(&self) -> f64 {
        self.ode_residuals.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }
}

pub fn check_kkt(model: &PrimalModel, system: &AssembledSystem) -> Result<KktReport> {
    let mut x = model.omega.clone();
    x.push(model.bias);
    x.extend_from_slice(&model.multipliers);
    if x.len() != system.side() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: system.side(),
        });
    }
    let mx = mat_vec(&system.matrix, &x);
    let system_residual = mx
        .iter()
        .zip(&system.rhs)
        .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
    let rhs_norm = system.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let side = system.side();
    let matrix_norm = (0..side)
        .map(|i| (0..side).map(|j| system.matrix[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let solution_norm = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut condition_residuals = Vec::with_capacity(system.conditions.len());
    for c in &system.conditions.items {
        let y = model.predict(c.order, &[c.point])?[0];
        condition_residuals.push((y - c.value).abs());
    }
    let d_omega = mat_vec(&system.operator, &model.omega);
    let ode_residuals = d_omega
        .iter()
        .zip(&system.bias_coeff)
        .zip(&system.forcing)
        .map(|((dw, fp), r)| dw - fp * model.bias - r)
        .collect();
    Ok(KktReport {
        system_residual,
        rhs_norm,
        matrix_norm,
        solution_norm,
        condition_residuals,
        ode_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RbfKernel;
    use crate::nystrom::{select_landmarks, SamplingStrategy, DEFAULT_DROP_TOL};
    use crate::ode_model::{problem, reference_solution, OdeSpec};

    fn zero_spec(order: usize) -> LinearOdeSpec {
        LinearOdeSpec {
            order,
            coeffs: (0..order).map(|_| Arc::new(|_: f64| 0.0) as _).collect(),
            forcing: Arc::new(|_| 0.0),
        }
    }

    fn map_for(grid: &[f64], m: usize, sigma2: f64) -> Arc<NystromFeatureMap> {
        let k = RbfKernel::new(sigma2).unwrap();
        let lm = select_landmarks(SamplingStrategy::Equidistant, &k, grid, m).unwrap();
        Arc::new(NystromFeatureMap::build(k, &lm, DEFAULT_DROP_TOL).unwrap())
    }

    fn solve_problem(id: usize, n: usize, m: usize) -> (PrimalModel, AssembledSystem, Vec<f64>) {
        let p = problem(id).unwrap();
        let grid = p.grid(n);
        let map = map_for(&grid, m, p.defaults.sigma2);
        let OdeSpec::Linear(spec) = &p.spec else {
            panic!("linear problem expected")
        };
        let sys = assemble(spec, &p.conditions, &map, &grid, p.defaults.gamma).unwrap();
        let model = solve(&sys, &map).unwrap();
        (model, sys, grid)
    }

    fn mae(model: &PrimalModel, id: usize, grid: &[f64]) -> f64 {
        let p = problem(id).unwrap();
        let y = model.predict(0, grid).unwrap();
        let r = reference_solution(&p, grid).unwrap();
        y.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum::<f64>() / grid.len() as f64
    }

    #[test]
    fn zero_problem_gives_zero_model() {
        let grid = crate::ode_model::linspace(0.0, 1.0, 30);
        let map = map_for(&grid, 8, 1.0);
        let cond = Conditions::initial(0.0, &[0.0]);
        let sys = assemble(&zero_spec(1), &cond, &map, &grid, 1e4).unwrap();
        assert_eq!(sys.side(), map.m_eff() + 2);
        let model = solve(&sys, &map).unwrap();
        assert!(model.omega().iter().all(|&v| v == 0.0));
        assert_eq!(model.bias(), 0.0);
        assert!(model.predict(0, &grid).unwrap().iter().all(|&v| v == 0.0));
        let rep = check_kkt(&model, &sys).unwrap();
        assert!(rep.system_residual <= f64::EPSILON);
        assert!(rep.max_condition_residual() <= f64::EPSILON);
    }

    #[test]
    fn side_is_features_plus_bias_plus_conditions() {
        let grid = crate::ode_model::linspace(0.0, 1.0, 30);
        let map = map_for(&grid, 8, 1.0);
        let ivp2 = Conditions::initial(0.0, &[0.0, 1.0]);
        let sys = assemble(&zero_spec(2), &ivp2, &map, &grid, 1e4).unwrap();
        assert_eq!(sys.side(), map.m_eff() + 3);
        assert_eq!(sys.constraint_points.len(), 29);
        let bad = assemble(&zero_spec(5), &ivp2, &map, &grid, 1e4);
        assert!(matches!(bad, Err(Error::UnsupportedOrder { .. })));
    }

    #[test]
    fn system_is_symmetric() {
        let (_, sys, _) = solve_problem(10, 200, 20);
        let a = &sys.matrix;
        for i in 0..sys.side() {
            for j in 0..sys.side() {
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
    }

    #[test]
    fn problem12_accuracy_and_conditions() {
        let (model, sys, grid) = solve_problem(12, 1000, 20);
        assert_eq!(sys.side(), model.feature_map().m_eff() + 3);
        assert_eq!(sys.constraint_points.len(), 998);
        let err = mae(&model, 12, &grid);
        assert!(err <= 3.2e-8, "MAE {err}");
        let rep = check_kkt(&model, &sys).unwrap();
        assert!(rep.max_condition_residual() <= 1e-8, "{:?}", rep.condition_residuals);
        assert!(rep.relative_residual() <= 1e-8, "{}", rep.relative_residual());
    }

    #[test]
    fn singular_coefficient_is_never_evaluated_at_the_origin() {
        for id in [11, 13] {
            let (model, sys, grid) = solve_problem(id, 1000, 20);
            assert!(sys.constraint_points[0] > 0.0);
            assert!(mae(&model, id, &grid) < 1e-5);
        }
    }

    #[test]
    fn problem2_initial_value() {
        let (model, _, _) = solve_problem(2, 2000, 50);
        let y0 = model.predict(0, &[0.0]).unwrap()[0];
        assert!((y0 - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn derivative_prediction_matches_finite_differences() {
        let (model, _, _) = solve_problem(7, 500, 50);
        let h = 1e-5;
        for &t in &[0.5, 3.3, 10.0, 17.9] {
            let d = model.predict(1, &[t]).unwrap()[0];
            let y = model.predict(0, &[t - h, t + h]).unwrap();
            let fd = (y[1] - y[0]) / (2.0 * h);
            assert!((fd - d).abs() <= 1e-4 * d.abs().max(1e-2), "t {t}: {fd} vs {d}");
        }
        assert!(model.predict(5, &[0.0]).is_err());
    }

    #[test]
    fn hermite_conditions_hold() {
        let (model, sys, grid) = solve_problem(16, 1000, 20);
        let rep = check_kkt(&model, &sys).unwrap();
        assert!(rep.max_condition_residual() <= 1e-8, "{:?}", rep.condition_residuals);
        assert!(mae(&model, 16, &grid) <= 1.8e-4);
    }

    #[test]
    fn rejects_bad_gamma() {
        let grid = crate::ode_model::linspace(0.0, 1.0, 10);
        let map = map_for(&grid, 4, 1.0);
        let cond = Conditions::initial(0.0, &[0.0]);
        assert!(assemble(&zero_spec(1), &cond, &map, &grid, 0.0).is_err());
    }
}
