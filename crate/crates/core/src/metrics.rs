//! Pointwise error metrics, timings and run-to-run comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::RunResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub linf: f64,
    /// `1 - SS_res / SS_tot` about the reference mean; absent when the
    /// reference is constant.
    pub r2: Option<f64>,
}

pub fn compute_errors(predicted: &[f64], reference: &[f64]) -> Result<ErrorMetrics> {
    if predicted.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: reference.len(),
        });
    }
    let n = predicted.len();
    if n < 2 {
        return Err(Error::invalid("predicted", "at least two samples are required"));
    }
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut linf = 0.0f64;
    for (p, r) in predicted.iter().zip(reference) {
        let e = p - r;
        if !e.is_finite() {
            return Err(Error::NonFinite {
                context: "prediction error".into(),
            });
        }
        abs_sum += e.abs();
        sq_sum += e * e;
        linf = linf.max(e.abs());
    }
    let nf = n as f64;
    Ok(ErrorMetrics {
        mae: abs_sum / nf,
        rmse: (sq_sum / nf).sqrt(),
        linf,
        r2: r_squared(predicted, reference).ok(),
    })
}

pub fn r_squared(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: reference.len(),
        });
    }
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ConstantReference);
    }
    let ss_res: f64 = predicted.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Wall-clock seconds. `train` covers landmark selection, the
/// eigendecomposition and the solve; `predict` covers evaluation on the
/// metric grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.train_seconds + self.predict_seconds
    }
}

/// Differences `b - a` and speedups `a / b`, with `a` the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub delta_r2: Option<f64>,
    pub delta_mae: f64,
    pub delta_rmse: f64,
    pub delta_linf: f64,
    /// Ratio of train + predict times.
    pub speedup: f64,
    pub train_speedup: f64,
}

pub fn compare_runs(a: &RunResult, b: &RunResult) -> Result<RunComparison> {
    if a.config.problem != b.config.problem {
        return Err(Error::IncompatibleRuns {
            reason: format!("problems {} and {}", a.config.problem, b.config.problem),
        });
    }
    if a.eval_points != b.eval_points || a.domain != b.domain {
        return Err(Error::IncompatibleRuns {
            reason: format!(
                "evaluation grids differ ({} vs {} points)",
                a.eval_points, b.eval_points
            ),
        });
    }
    let (ma, mb) = match (&a.metrics, &b.metrics) {
        (Some(ma), Some(mb)) => (ma, mb),
        _ => {
            return Err(Error::IncompatibleRuns {
                reason: "a run carries no metrics".into(),
            })
        }
    };
    Ok(RunComparison {
        delta_r2: ma.r2.zip(mb.r2).map(|(x, y)| y - x),
        delta_mae: mb.mae - ma.mae,
        delta_rmse: mb.rmse - ma.rmse,
        delta_linf: mb.linf - ma.linf,
        speedup: ratio(a.timings.total(), b.timings.total()),
        train_speedup: ratio(a.timings.train_seconds, b.timings.train_seconds),
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_prediction() {
        let r = [1.0, 2.0, 4.0];
        let m = compute_errors(&r, &r).unwrap();
        assert_eq!((m.mae, m.rmse, m.linf, m.r2), (0.0, 0.0, 0.0, Some(1.0)));
    }

    #[test]
    fn constant_offset() {
        let r = [0.0, 1.0, 2.0, 3.0];
        let p: Vec<f64> = r.iter().map(|v| v + 1.0).collect();
        let m = compute_errors(&p, &r).unwrap();
        assert_eq!((m.mae, m.rmse, m.linf), (1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_computed_errors() {
        let r = [0.0, 1.0, 2.0, 3.0];
        let p = [1.0, 0.0, 2.0, 3.0];
        let m = compute_errors(&p, &r).unwrap();
        assert_eq!(m.mae, 0.5);
        assert!((m.rmse - 0.5f64.sqrt()).abs() < 1e-16);
        assert_eq!(m.linf, 1.0);
        // SS_tot = 5, SS_res = 2
        assert!((m.r2.unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            compute_errors(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(compute_errors(&[1.0], &[1.0]).is_err());
        assert!(matches!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::ConstantReference)));
        assert_eq!(compute_errors(&[1.0, 2.0], &[3.0, 3.0]).unwrap().r2, None);
    }

    #[test]
    fn permutation_invariance() {
        let r = [0.3, -1.0, 2.5, 7.0, 0.0];
        let p = [0.1, -1.5, 2.0, 7.25, 1.0];
        let a = compute_errors(&p, &r).unwrap();
        let order = [3, 0, 4, 1, 2];
        let rp: Vec<f64> = order.iter().map(|&i| r[i]).collect();
        let pp: Vec<f64> = order.iter().map(|&i| p[i]).collect();
        let b = compute_errors(&pp, &rp).unwrap();
        assert!((a.mae - b.mae).abs() < 1e-15);
        assert!((a.rmse - b.rmse).abs() < 1e-15);
        assert_eq!(a.linf, b.linf);
    }
}
