//! Residual whiteness and input-independence tests.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{prediction_errors, EstimationConfig, EstimationError};
use crate::hwmodel::HwMiso;
use crate::timeseries::TimeSeries;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("need N > 10·max_lag (N = {n}, max_lag = {max_lag})")]
    TooShort { n: usize, max_lag: usize },
    #[error("prewhitening regression is singular")]
    Singular,
    #[error("invalid residual config: {0}")]
    InvalidConfig(String),
    #[error("input `{0}` length differs from residuals")]
    LengthMismatch(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("csv export: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualConfig {
    pub max_lag: usize,
    /// AR order of the whitening filter applied to residuals and inputs.
    pub prewhiten_order: Option<usize>,
    /// Out-of-bound lags tolerated per test; `None` picks the binomial
    /// allowance that keeps each whole test at the 1% false-rejection level.
    pub allowed_violations: Option<usize>,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        ResidualConfig {
            max_lag: 25,
            prewhiten_order: None,
            allowed_violations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub input: String,
    /// r_ue(τ) for τ = −max_lag..=max_lag.
    pub values: Vec<f64>,
    pub pass: bool,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub max_lag: usize,
    /// r_ee(τ) for τ = 0..=max_lag.
    pub autocorrelation: Vec<f64>,
    pub cross: Vec<CrossCorrelation>,
    pub bound: f64,
    /// Bonferroni bound over a test's lags; any lag beyond it fails the test.
    pub hard_bound: f64,
    pub auto_pass: bool,
    pub auto_violations: usize,
    /// Zero-variance residuals: every test passes trivially.
    pub degenerate: bool,
    /// AR coefficients of the whitening filter, when one was used.
    pub prewhitening: Option<Vec<f64>>,
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.auto_pass && self.cross.iter().all(|c| c.pass)
    }

    /// Names of failing tests: `autocorrelation`, `cross_correlation:<input>`.
    pub fn failing_checks(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.auto_pass {
            out.push("autocorrelation".to_string());
        }
        out.extend(self.cross.iter().filter(|c| !c.pass).map(|c| format!("cross_correlation:{}", c.input)));
        out
    }

    /// Fraction of tested autocorrelation lags outside the bound.
    pub fn violation_fraction(&self) -> f64 {
        if self.max_lag == 0 {
            0.0
        } else {
            self.auto_violations as f64 / self.max_lag as f64
        }
    }

    /// One row per lag τ = −L..=L: lag, r_ee, ±bound, then one r_ue column per input.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ValidationError> {
        let io = |e: csv::Error| ValidationError::Io(e.to_string());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["lag".to_string(), "r_ee".into(), "upper".into(), "lower".into()];
        header.extend(self.cross.iter().map(|c| format!("r_ue_{}", c.input)));
        wr.write_record(&header).map_err(io)?;
        let l = self.max_lag as i64;
        for tau in -l..=l {
            let mut row = vec![
                tau.to_string(),
                format!("{:.17e}", self.autocorrelation[tau.unsigned_abs() as usize]),
                format!("{:.17e}", self.bound),
                format!("{:.17e}", -self.bound),
            ];
            row.extend(self.cross.iter().map(|c| format!("{:.17e}", c.values[(tau + l) as usize])));
            wr.write_record(&row).map_err(io)?;
        }
        wr.flush().map_err(|e| ValidationError::Io(e.to_string()))
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), ValidationError> {
        let f = std::fs::File::create(path).map_err(|e| ValidationError::Io(e.to_string()))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// `measured − simulated`, transient discarded as in estimation.
pub fn residuals(model: &HwMiso, data: &TimeSeries, config: &EstimationConfig) -> Result<Vec<f64>, ValidationError> {
    Ok(prediction_errors(model, data, config)?)
}

pub fn confidence_bound(n: usize) -> f64 {
    Z99 / (n as f64).sqrt()
}

/// z(1 − 0.005/lags)/√N: a single lag beyond this is already significant
/// at the 1% level for the whole test.
pub fn family_bound(n: usize, lags: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let std = Normal::standard();
    std.inverse_cdf(1.0 - 0.005 / lags.max(1) as f64) / (n as f64).sqrt()
}

/// Smallest k with P(Binomial(lags, 0.01) > k) ≤ 0.01.
pub fn binomial_allowance(lags: usize) -> usize {
    let p: f64 = 0.01;
    let mut term = (1.0 - p).powi(lags as i32);
    let mut cdf = term;
    let mut k = 0;
    while 1.0 - cdf > 0.01 && k < lags {
        term *= (lags - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        k += 1;
        cdf += term;
    }
    k
}

fn demean(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - m).collect()
}

/// Σ_k a[k]·b[k + τ] for τ ≥ 0.
fn lagged(a: &[f64], b: &[f64], tau: usize) -> f64 {
    if tau >= a.len() {
        return 0.0;
    }
    a[..a.len() - tau].iter().zip(&b[tau..]).map(|(x, y)| x * y).sum()
}

/// Sample auto- and cross-correlation of `e` against each input, with the
/// 99% bound 2.576/√N. Lag 0 of the autocorrelation is not tested; a test
/// passes while its out-of-bound lag count stays within the allowance.
pub fn correlation_test(e: &[f64], inputs: &[(&str, &[f64])], max_lag: usize) -> Result<ResidualReport, ValidationError> {
    correlation_test_with(e, inputs, max_lag, None)
}

/// [`correlation_test`] with an explicit per-test violation allowance.
pub fn correlation_test_with(
    e: &[f64],
    inputs: &[(&str, &[f64])],
    max_lag: usize,
    allowed: Option<usize>,
) -> Result<ResidualReport, ValidationError> {
    let n = e.len();
    if n <= 10 * max_lag || n < 2 {
        return Err(ValidationError::TooShort { n, max_lag });
    }
    for (name, u) in inputs {
        if u.len() != n {
            return Err(ValidationError::LengthMismatch(name.to_string()));
        }
    }
    let bound = confidence_bound(n);
    let hard_bound = family_bound(n, max_lag);
    let ec = demean(e);
    let r0 = lagged(&ec, &ec, 0);
    let degenerate = !(r0 > 1e-300 * n as f64);

    let mut autocorrelation = vec![1.0; max_lag + 1];
    let mut auto_violations = 0;
    if !degenerate {
        for (tau, slot) in autocorrelation.iter_mut().enumerate().skip(1) {
            *slot = lagged(&ec, &ec, tau) / r0;
            if slot.abs() > bound {
                auto_violations += 1;
            }
        }
    } else {
        autocorrelation[1..].fill(0.0);
    }

    let auto_pass = auto_violations <= allowed.unwrap_or_else(|| binomial_allowance(max_lag))
        && autocorrelation[1..].iter().all(|v| v.abs() <= hard_bound);

    let cross = inputs
        .iter()
        .map(|(name, u)| {
            let uc = demean(u);
            let ru = lagged(&uc, &uc, 0);
            let scale = (ru * r0).sqrt();
            let mut values = Vec::with_capacity(2 * max_lag + 1);
            for k in 0..=2 * max_lag {
                let v = if degenerate || !(scale > 0.0) {
                    0.0
                } else if k < max_lag {
                    // negative lag: residual leads the input
                    lagged(&ec, &uc, max_lag - k) / scale
                } else {
                    lagged(&uc, &ec, k - max_lag) / scale
                };
                values.push(v);
            }
            let violations = values.iter().filter(|v| v.abs() > bound).count();
            let lags = 2 * max_lag + 1;
            let allowance = allowed.unwrap_or_else(|| binomial_allowance(lags));
            let hard = family_bound(n, lags);
            CrossCorrelation {
                input: name.to_string(),
                pass: violations <= allowance && values.iter().all(|v| v.abs() <= hard),
                values,
                violations,
            }
        })
        .collect();

    Ok(ResidualReport {
        residuals: e.to_vec(),
        max_lag,
        autocorrelation,
        cross,
        bound,
        hard_bound,
        auto_pass,
        auto_violations,
        degenerate,
        prewhitening: None,
    })
}

/// Least-squares AR(order) fit `e[k] = Σ a_i·e[k−i] + w[k]` on the demeaned
/// residuals; returns the prediction errors `w` (length N − order) and `a`.
pub fn prewhiten(e: &[f64], order: usize) -> Result<(Vec<f64>, Vec<f64>), ValidationError> {
    if order == 0 {
        return Err(ValidationError::InvalidConfig("prewhitening order must be ≥ 1".into()));
    }
    if e.len() <= 10 * order {
        return Err(ValidationError::TooShort { n: e.len(), max_lag: order });
    }
    let ec = demean(e);
    let rows = ec.len() - order;
    let phi = DMatrix::from_fn(rows, order, |r, c| ec[r + order - 1 - c]);
    let y = DVector::from_column_slice(&ec[order..]);
    let ata = phi.tr_mul(&phi);
    let scale = ata.diagonal().max();
    if !(scale > 0.0) {
        return Err(ValidationError::Singular);
    }
    let svd = ata.clone().svd(true, true);
    if svd.singular_values.min() <= 1e-12 * svd.singular_values.max() {
        return Err(ValidationError::Singular);
    }
    let a = svd.solve(&phi.tr_mul(&y), 0.0).map_err(|_| ValidationError::Singular)?;
    let a: Vec<f64> = a.iter().copied().collect();
    Ok((whiten_with(&ec, &a), a))
}

/// Applies `w[k] = x[k] − Σ a_i·x[k−i]` for k ≥ order (x demeaned first).
pub fn whiten_with(x: &[f64], a: &[f64]) -> Vec<f64> {
    let xc = demean(x);
    let p = a.len();
    (p..xc.len())
        .map(|k| xc[k] - a.iter().enumerate().map(|(i, ai)| ai * xc[k - 1 - i]).sum::<f64>())
        .collect()
}

/// Residuals of `model` on `data` tested against the model's inputs; with a
/// prewhitening order the AR-filtered residuals are tested instead.
pub fn analyze(
    model: &HwMiso,
    data: &TimeSeries,
    estimation: &EstimationConfig,
    config: &ResidualConfig,
) -> Result<ResidualReport, ValidationError> {
    let e = residuals(model, data, estimation)?;
    let skip = data.len() - e.len();
    let inputs = model.input_slices(data).map_err(EstimationError::from)?;
    let names: Vec<&str> = model.inputs.iter().map(String::as_str).collect();
    match config.prewhiten_order {
        None => {
            let tested: Vec<(&str, &[f64])> = names.iter().copied().zip(inputs.iter().map(|u| &u[skip..])).collect();
            correlation_test_with(&e, &tested, config.max_lag, config.allowed_violations)
        }
        Some(order) => {
            let (w, a) = match prewhiten(&e, order) {
                Ok(v) => v,
                // zero-variance residuals: nothing to whiten
                Err(ValidationError::Singular) => {
                    let tested: Vec<(&str, &[f64])> =
                        names.iter().copied().zip(inputs.iter().map(|u| &u[skip..])).collect();
                    return correlation_test_with(&e, &tested, config.max_lag, config.allowed_violations);
                }
                Err(err) => return Err(err),
            };
            // whitened residuals against raw inputs: the bound only needs one side white
            let off = skip + a.len();
            let tested: Vec<(&str, &[f64])> = names.iter().copied().zip(inputs.iter().map(|u| &u[off..])).collect();
            let mut report = correlation_test_with(&w, &tested, config.max_lag, config.allowed_violations)?;
            report.prewhitening = Some(a);
            Ok(report)
        }
    }
}
