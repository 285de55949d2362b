//! Landmark selection and the explicit Nyström feature map.
//!
//! With `Omega = Phi diag(s) Phi^T` the eigendecomposition of the landmark
//! Gram matrix, the map is `phi_k(t) = s_k^{-1/2} sum_s Phi[s, k] K(t_s, t)`,
//! so `phi(u)^T phi(v) = k_m(u)^T Omega^{-1} k_m(v)` and the inner product is
//! exact whenever `u` and `v` are landmarks.

use faer::prelude::Solve;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RbfKernel;

/// Relative eigenvalue cutoff, about machine epsilon times the largest
/// eigenvalue: the numerical rank of the landmark Gram matrix.
pub const DEFAULT_DROP_TOL: f64 = 1e-16;
pub const DEFAULT_LEVERAGE_RIDGE: f64 = 1e-6;

/// Largest pilot set used to estimate leverage scores. Grids up to this size
/// get exact ridge leverage scores.
const LEVERAGE_PILOT: usize = 1000;

const COINCIDENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingStrategy {
    Equidistant,
    Random { seed: u64 },
    LeverageScore { seed: u64, ridge: f64 },
}

impl SamplingStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingStrategy::Equidistant => "equidistant",
            SamplingStrategy::Random { .. } => "random",
            SamplingStrategy::LeverageScore { .. } => "leverage",
        }
    }
}

/// Pick `m` distinct grid points according to `strategy`, returned in
/// increasing order.
pub fn select_landmarks(
    strategy: SamplingStrategy,
    kernel: &RbfKernel,
    grid: &[f64],
    m: usize,
) -> Result<Vec<f64>> {
    let n = grid.len();
    if m < 2 || m > n {
        return Err(Error::InvalidCount { m, n });
    }
    check_increasing(grid)?;
    let idx = match strategy {
        SamplingStrategy::Equidistant => equidistant_indices(n, m),
        SamplingStrategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        SamplingStrategy::LeverageScore { seed, ridge } => {
            if !(ridge.is_finite() && ridge > 0.0) {
                return Err(Error::invalid("ridge", format!("must be positive, got {ridge}")));
            }
            let scores = leverage_scores(kernel, grid, ridge)?;
            weighted_sample(&scores, m, seed)
        }
    };
    Ok(idx.into_iter().map(|i| grid[i]).collect())
}

pub fn equidistant_indices(n: usize, m: usize) -> Vec<usize> {
    if m == 1 {
        return vec![0];
    }
    let step = (n - 1) as f64 / (m - 1) as f64;
    (0..m).map(|i| (i as f64 * step).round() as usize).collect()
}

fn check_increasing(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite {
            context: "grid".into(),
        });
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Ridge leverage scores `diag(Omega (Omega + n ridge I)^{-1})` of the grid
/// kernel matrix, computed through a Nyström factor `Omega ~ B B^T`.
pub fn leverage_scores(kernel: &RbfKernel, grid: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    let pilot: Vec<f64> = if n <= LEVERAGE_PILOT {
        grid.to_vec()
    } else {
        equidistant_indices(n, LEVERAGE_PILOT)
            .into_iter()
            .map(|i| grid[i])
            .collect()
    };
    let map = NystromFeatureMap::build(kernel.clone(), &pilot, DEFAULT_DROP_TOL)?;
    let b = map.feature_matrix(0, grid)?;
    let mut gram = b.transpose() * &b;
    let shift = n as f64 * ridge;
    for k in 0..gram.nrows() {
        gram[(k, k)] += shift;
    }
    let lu = gram.partial_piv_lu();
    let bt: Mat<f64> = b.transpose().to_owned();
    let z = lu.solve(&bt);
    Ok((0..n)
        .map(|i| {
            let s: f64 = (0..b.ncols()).map(|k| b[(i, k)] * z[(k, i)]).sum();
            s.max(0.0)
        })
        .collect())
}

/// Weighted sampling without replacement (Efraimidis and Spirakis keys).
fn weighted_sample(weights: &[f64], m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / w.max(1e-300), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut idx: Vec<usize> = keyed[..m].iter().map(|&(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone)]
pub struct NystromFeatureMap {
    kernel: RbfKernel,
    landmarks: Vec<f64>,
    drop_tol: f64,
    /// Retained eigenvalues, descending.
    eigenvalues: Vec<f64>,
    /// m x m_eff, orthonormal columns.
    eigenvectors: Mat<f64>,
    /// `eigenvectors * diag(eigenvalues^{-1/2})`.
    projection: Mat<f64>,
}

impl NystromFeatureMap {
    pub fn build(kernel: RbfKernel, landmarks: &[f64], drop_tol: f64) -> Result<Self> {
        if landmarks.is_empty() {
            return Err(Error::InvalidCount { m: 0, n: 0 });
        }
        if !(0.0..1.0).contains(&drop_tol) {
            return Err(Error::invalid("drop_tol", format!("must lie in [0, 1), got {drop_tol}")));
        }
        if landmarks.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                context: "landmarks".into(),
            });
        }
        let mut sorted = landmarks.to_vec();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[1] - w[0] <= COINCIDENT) {
            return Err(Error::DegenerateLandmarks { a: w[0], b: w[1] });
        }

        let omega = kernel.kernel_matrix(0, landmarks, landmarks)?;
        let eig = omega
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::NonFinite {
                context: "landmark eigendecomposition".into(),
            })?;
        let s = eig.S().column_vector();
        let u = eig.U();
        let m = landmarks.len();
        let smax = s[m - 1];
        // ascending from the solver; walk it backwards
        let keep: Vec<usize> = (0..m)
            .rev()
            .filter(|&k| s[k] > 0.0 && s[k] > drop_tol * smax)
            .collect();
        if keep.is_empty() {
            return Err(Error::NonFinite {
                context: "landmark Gram matrix has no positive eigenvalue".into(),
            });
        }
        let eigenvalues: Vec<f64> = keep.iter().map(|&k| s[k]).collect();
        let eigenvectors = Mat::from_fn(m, keep.len(), |i, j| u[(i, keep[j])]);
        let projection = Mat::from_fn(m, keep.len(), |i, j| {
            eigenvectors[(i, j)] / eigenvalues[j].sqrt()
        });
        Ok(Self {
            kernel,
            landmarks: landmarks.to_vec(),
            drop_tol,
            eigenvalues,
            eigenvectors,
            projection,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn landmarks(&self) -> &[f64] {
        &self.landmarks
    }

    pub fn drop_tol(&self) -> f64 {
        self.drop_tol
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Mat<f64> {
        &self.eigenvectors
    }

    /// Retained rank, the dimension of the feature space.
    pub fn m_eff(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn feature(&self, t: f64) -> Vec<f64> {
        self.feature_deriv(0, t).expect("order 0 is always supported")
    }

    pub fn feature_deriv(&self, ell: usize, t: f64) -> Result<Vec<f64>> {
        let row = self.feature_matrix(ell, &[t])?;
        Ok((0..self.m_eff()).map(|k| row[(0, k)]).collect())
    }

    /// Rows are `phi^(ell)(points[i])`.
    pub fn feature_matrix(&self, ell: usize, points: &[f64]) -> Result<Mat<f64>> {
        let poly = self.kernel.polynomial(ell)?;
        let lm = &self.landmarks;
        // K(t_s, t) differentiated in its second argument t
        let kd = Mat::from_fn(points.len(), lm.len(), |i, s| {
            poly.eval(lm[s] - points[i]) * self.kernel.eval(lm[s], points[i])
        });
        Ok(kd * &self.projection)
    }
}
