//! Gaussian RBF kernel `K(u, v) = exp(-(u - v)^2 / sigma2)` and its derivatives
//! with respect to the second argument.
//!
//! Every derivative has the form `d^a K / dv^a = P_a(u - v) * K(u, v)` where
//! `P_a` is a polynomial in `d = u - v`. The polynomials follow the recursion
//! `P_{a+1}(d) = (2 d / sigma2) P_a(d) - P_a'(d)` with `P_0 = 1`; coefficients
//! are built once per kernel and evaluated in Horner form.

use faer::Mat;

use crate::error::{Error, Result};

/// Highest derivative order supported by the kernel and feature maps.
pub const MAX_DERIV_ORDER: usize = 4;

/// Polynomial `P_a` such that `d^a K / dv^a = P_a(u - v) K(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivPolynomial {
    order: usize,
    /// `coeffs[j]` multiplies `d^j`.
    coeffs: Vec<f64>,
}

impl DerivPolynomial {
    fn identity() -> Self {
        Self {
            order: 0,
            coeffs: vec![1.0],
        }
    }

    fn next(&self, sigma2: f64) -> Self {
        let scale = 2.0 / sigma2;
        let mut coeffs = vec![0.0; self.coeffs.len() + 1];
        for (j, &c) in self.coeffs.iter().enumerate() {
            coeffs[j + 1] += scale * c;
            if j > 0 {
                coeffs[j - 1] -= j as f64 * c;
            }
        }
        Self {
            order: self.order + 1,
            coeffs,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * d + c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfKernel {
    sigma2: f64,
    polys: Vec<DerivPolynomial>,
}

impl RbfKernel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::invalid("sigma2", format!("must be positive, got {sigma2}")));
        }
        let mut polys = Vec::with_capacity(MAX_DERIV_ORDER + 1);
        polys.push(DerivPolynomial::identity());
        for a in 0..MAX_DERIV_ORDER {
            let next = polys[a].next(sigma2);
            polys.push(next);
        }
        Ok(Self { sigma2, polys })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn polynomial(&self, order: usize) -> Result<&DerivPolynomial> {
        self.polys.get(order).ok_or(Error::UnsupportedOrder {
            order,
            max: MAX_DERIV_ORDER,
        })
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let d = u - v;
        (-d * d / self.sigma2).exp()
    }

    /// `d^order K(u, v) / dv^order`.
    pub fn eval_deriv(&self, order: usize, u: f64, v: f64) -> Result<f64> {
        let poly = self.polynomial(order)?;
        Ok(poly.eval(u - v) * self.eval(u, v))
    }

    /// Matrix with entries `d^order K(rows[i], cols[j]) / dv^order`.
    pub fn kernel_matrix(&self, order: usize, rows: &[f64], cols: &[f64]) -> Result<Mat<f64>> {
        let poly = self.polynomial(order)?;
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::invalid("points", "kernel matrix needs non-empty point sets"));
        }
        Ok(Mat::from_fn(rows.len(), cols.len(), |i, j| {
            let (u, v) = (rows[i], cols[j]);
            poly.eval(u - v) * self.eval(u, v)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Side;

    // Central difference of `d^order K / dv^order` in v.
    fn fd_in_v(k: &RbfKernel, order: usize, u: f64, v: f64, h: f64) -> f64 {
        (k.eval_deriv(order, u, v + h).unwrap() - k.eval_deriv(order, u, v - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn rejects_nonpositive_bandwidth() {
        assert!(RbfKernel::new(0.0).is_err());
        assert!(RbfKernel::new(-1.0).is_err());
        assert!(RbfKernel::new(f64::NAN).is_err());
    }

    #[test]
    fn eval_examples() {
        let k = RbfKernel::new(1.0).unwrap();
        assert_eq!(k.eval(0.0, 0.0), 1.0);
        assert!((k.eval(1.0, 0.0) - 0.367_879_441_171_442_32).abs() < 1e-16);
        let k10 = RbfKernel::new(10.0).unwrap();
        // exp(-0.9), 30-digit evaluation
        assert!((k10.eval(2.0, -1.0) - 0.406_569_659_740_599_1).abs() < 1e-16);
        assert_eq!(k10.eval(2.0, -1.0), k10.eval(-1.0, 2.0));
    }

    #[test]
    fn low_order_polynomials_match_closed_forms() {
        for &s2 in &[0.5, 1.0, 8.0, 10.0] {
            let k = RbfKernel::new(s2).unwrap();
            assert_eq!(k.polynomial(0).unwrap().coefficients(), &[1.0]);
            for &d in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
                let p1 = 2.0 * d / s2;
                let p2 = 4.0 * d * d / (s2 * s2) - 2.0 / s2;
                assert!((k.polynomial(1).unwrap().eval(d) - p1).abs() <= 1e-15 * (1.0 + p1.abs()));
                assert!((k.polynomial(2).unwrap().eval(d) - p2).abs() <= 1e-15 * (1.0 + p2.abs()));
            }
        }
    }

    #[test]
    fn eval_deriv_examples() {
        let k = RbfKernel::new(1.0).unwrap();
        assert_eq!(k.eval_deriv(1, 0.3, 0.3).unwrap(), 0.0);
        assert_eq!(k.eval_deriv(2, 0.3, 0.3).unwrap(), -2.0);
        // P4(1) e^-1 with P4(d) = 16d^4 - 48d^2 + 12 at sigma2 = 1
        let expected = -7.357_588_823_428_846;
        let got = k.eval_deriv(4, 1.0, 0.0).unwrap();
        assert!((got - expected).abs() < 1e-14);
        let fd = fd_in_v(&k, 3, 1.0, 0.0, 1e-4);
        assert!((fd - got).abs() / got.abs() < 1e-5);
        assert!(matches!(
            k.eval_deriv(5, 0.0, 0.0),
            Err(Error::UnsupportedOrder { order: 5, .. })
        ));
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &s2 in &[1.0, 10.0] {
            let k = RbfKernel::new(s2).unwrap();
            let sigma = s2.sqrt();
            for _ in 0..100 {
                let u: f64 = rng.gen_range(-5.0..5.0);
                let v = u + rng.gen_range(-3.0 * sigma..3.0 * sigma);
                for a in 0..MAX_DERIV_ORDER {
                    let exact = k.eval_deriv(a + 1, u, v).unwrap();
                    if exact.abs() < 1e-8 {
                        continue;
                    }
                    let fd = fd_in_v(&k, a, u, v, 1e-4 * sigma);
                    let rel = (fd - exact).abs() / exact.abs();
                    assert!(rel <= 1e-4, "order {} at ({u},{v}): rel {rel}", a + 1);
                }
            }
        }
    }

    #[test]
    fn second_order_matrix_matches_finite_differences() {
        let k = RbfKernel::new(1.0).unwrap();
        let pts = [0.0, 0.4, 1.1];
        let m2 = k.kernel_matrix(2, &pts, &pts).unwrap();
        let h = 1e-4;
        for i in 0..3 {
            for j in 0..3 {
                let (u, v) = (pts[i], pts[j]);
                let fd = (k.eval(u, v + h) - 2.0 * k.eval(u, v) + k.eval(u, v - h)) / (h * h);
                let rel = (fd - m2[(i, j)]).abs() / m2[(i, j)].abs().max(1e-12);
                assert!(rel < 1e-5, "({i},{j}) rel {rel}");
            }
        }
        let one = k.kernel_matrix(0, &[0.0], &[0.0]).unwrap();
        assert_eq!(one[(0, 0)], 1.0);
    }

    #[test]
    fn gram_matrix_is_symmetric_psd() {
        let k = RbfKernel::new(1.0).unwrap();
        let pts: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let g = k.kernel_matrix(0, &pts, &pts).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
        let eig = g.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let floor = -1e-10 * pts.len() as f64;
        assert!(eig.iter().all(|&l| l >= floor));
    }
}
