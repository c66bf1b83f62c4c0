//! NRMSE fit and Akaike's final prediction error.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("fit undefined: measured channel is constant")]
    ConstantMeasurement,
    #[error("FPE needs more samples than parameters (N = {n}, n_p = {n_p})")]
    InvalidComplexity { n: usize, n_p: usize },
    #[error("prediction error matrix is empty or ragged")]
    BadErrorMatrix,
}

/// `100·(1 − ‖y − ŷ‖/‖y − mean(y)‖)`; negative for models worse than the mean.
pub fn nrmse_fit(measured: &[f64], modeled: &[f64]) -> Result<f64, MetricError> {
    if measured.len() != modeled.len() {
        return Err(MetricError::LengthMismatch(measured.len(), modeled.len()));
    }
    if measured.is_empty() {
        return Err(MetricError::ConstantMeasurement);
    }
    let mean = measured.iter().sum::<f64>() / measured.len() as f64;
    let num: f64 = measured.iter().zip(modeled).map(|(y, m)| (y - m).powi(2)).sum();
    let den: f64 = measured.iter().map(|y| (y - mean).powi(2)).sum();
    if !(den > 0.0) {
        return Err(MetricError::ConstantMeasurement);
    }
    Ok(100.0 * (1.0 - (num / den).sqrt()))
}

/// `det(EᵀE/N)·(1 + n_p/N)/(1 − n_p/N)` for an N×n_y error matrix given as
/// one column per output.
pub fn fpe(errors: &[&[f64]], n_p: usize) -> Result<f64, MetricError> {
    let ny = errors.len();
    let n = errors.first().map_or(0, |c| c.len());
    if ny == 0 || n == 0 || errors.iter().any(|c| c.len() != n) {
        return Err(MetricError::BadErrorMatrix);
    }
    if n <= n_p {
        return Err(MetricError::InvalidComplexity { n, n_p });
    }
    let cov = DMatrix::from_fn(ny, ny, |i, j| {
        errors[i].iter().zip(errors[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64
    });
    let det = if ny == 1 { cov[(0, 0)] } else { cov.determinant() };
    let r = n_p as f64 / n as f64;
    Ok(det * (1.0 + r) / (1.0 - r))
}

/// Scalar-output FPE.
pub fn fpe_scalar(errors: &[f64], n_p: usize) -> Result<f64, MetricError> {
    fpe(&[errors], n_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetLabel {
    Estimation,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub output: String,
    pub dataset: DatasetLabel,
    pub fit: f64,
    pub fpe: f64,
    pub n_p: usize,
    pub n: usize,
}

impl FitReport {
    pub fn compute(
        output: &str,
        dataset: DatasetLabel,
        measured: &[f64],
        modeled: &[f64],
        n_p: usize,
    ) -> Result<Self, MetricError> {
        let fit = nrmse_fit(measured, modeled)?;
        let e: Vec<f64> = measured.iter().zip(modeled).map(|(y, m)| y - m).collect();
        Ok(FitReport {
            output: output.to_string(),
            dataset,
            fit,
            fpe: fpe_scalar(&e, n_p)?,
            n_p,
            n: measured.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn fit_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(nrmse_fit(&y, &y).unwrap(), 100.0);
        assert_abs_diff_eq!(nrmse_fit(&y, &[2.0; 3]).unwrap(), 0.0, epsilon = 1e-12);
        let expected = 100.0 * (1.0 - 1.0 / 2f64.sqrt());
        assert_abs_diff_eq!(nrmse_fit(&y, &[1.0, 2.0, 4.0]).unwrap(), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(expected, 29.289_321_881_345_25, epsilon = 1e-9);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(nrmse_fit(&[1.0; 4], &[1.0; 4]), Err(MetricError::ConstantMeasurement));
        assert!(matches!(nrmse_fit(&[1.0, 2.0], &[1.0]), Err(MetricError::LengthMismatch(2, 1))));
    }

    #[test]
    fn fit_can_be_negative() {
        assert!(nrmse_fit(&[0.0, 1.0], &[5.0, -5.0]).unwrap() < 0.0);
    }

    #[test]
    fn fpe_examples() {
        let e = [1.0, -1.0, 1.0, -1.0];
        assert_abs_diff_eq!(fpe_scalar(&e, 2).unwrap(), 3.0, epsilon = 1e-12);
        assert_eq!(fpe_scalar(&[0.0; 5], 3).unwrap(), 0.0);
        assert_eq!(fpe_scalar(&e, 0).unwrap(), 1.0);
        assert!(matches!(fpe_scalar(&e, 4), Err(MetricError::InvalidComplexity { .. })));
    }

    #[test]
    fn fpe_matrix_form() {
        let a = [1.0, 0.0, -1.0, 0.0];
        let b = [0.0, 2.0, 0.0, -2.0];
        // EᵀE/N = diag(0.5, 2) → det 1
        assert_abs_diff_eq!(fpe(&[&a, &b], 0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(fpe(&[&a, &b[..3]], 0).is_err());
    }

    proptest! {
        #[test]
        fn fpe_increases_with_complexity(e in proptest::collection::vec(-5.0f64..5.0, 20..60), n_p in 0usize..15) {
            prop_assume!(e.iter().any(|v| v.abs() > 1e-3));
            let a = fpe_scalar(&e, n_p).unwrap();
            let b = fpe_scalar(&e, n_p + 1).unwrap();
            prop_assert!(b > a);
            let base = fpe_scalar(&e, 0).unwrap();
            prop_assert!(a >= base);
            if n_p > 0 { prop_assert!(a > base); }
        }

        #[test]
        fn fit_affine_invariant(y in proptest::collection::vec(-5.0f64..5.0, 5..40), noise in proptest::collection::vec(-1.0f64..1.0, 40), a in 0.1f64..10.0, neg in proptest::bool::ANY, b in -10.0f64..10.0) {
            let a = if neg { -a } else { a };
            let m: Vec<f64> = y.iter().zip(&noise).map(|(v, n)| v + n).collect();
            let base = match nrmse_fit(&y, &m) { Ok(v) => v, Err(_) => return Ok(()) };
            let ys: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let ms: Vec<f64> = m.iter().map(|v| a * v + b).collect();
            let scaled = nrmse_fit(&ys, &ms).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-8 * (1.0 + base.abs()));
        }
    }
}
