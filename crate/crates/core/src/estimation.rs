//! Output-error parameter estimation for Hammerstein-Wiener blocks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwmodel::{Family, HwMiso, InitialState, LinearBlock, ModelError, Nonlinearity, ScaledNonlinearity};
use crate::timeseries::TimeSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("missing channel `{0}`")]
    MissingChannel(String),
    #[error("invalid estimation config: {0}")]
    InvalidConfig(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("not enough samples: {rows} usable rows for {n_p} parameters")]
    TooFewSamples { rows: usize, n_p: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SubspaceGaussNewton,
    AdaptiveSubspaceGaussNewton,
    LevenbergMarquardt,
    SteepestDescent,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SubspaceGaussNewton => "subspace_gauss_newton",
            Method::AdaptiveSubspaceGaussNewton => "adaptive_subspace_gauss_newton",
            Method::LevenbergMarquardt => "levenberg_marquardt",
            Method::SteepestDescent => "steepest_descent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    LossStalled,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    /// Output weight. MISO blocks have one output, so W is a scalar.
    pub weight: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Relative loss improvement over `stall_window` iterations.
    pub loss_tolerance: f64,
    pub stall_window: usize,
    pub method: Method,
    pub lm_lambda0: f64,
    pub lm_increase: f64,
    pub lm_decrease: f64,
    /// Leading samples left out of the loss; `None` means max(n_f, 50).
    pub discard: Option<usize>,
    /// Relative singular-value cutoff for the subspace methods.
    pub subspace_cutoff: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            weight: 1.0,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            loss_tolerance: 1e-10,
            stall_window: 5,
            method: Method::LevenbergMarquardt,
            lm_lambda0: 1e-3,
            lm_increase: 10.0,
            lm_decrease: 10.0,
            discard: None,
            subspace_cutoff: 1e-8,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |m: &str| Err(EstimationError::InvalidConfig(m.to_string()));
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return bad("weight must be non-negative");
        }
        if !(self.gradient_tolerance > 0.0 && self.loss_tolerance > 0.0 && self.subspace_cutoff > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.lm_lambda0 > 0.0 && self.lm_increase > 1.0 && self.lm_decrease > 1.0) {
            return bad("LM damping must start positive and change by factors > 1");
        }
        if self.stall_window == 0 {
            return bad("stall window must be ≥ 1");
        }
        Ok(())
    }

    pub fn discard_for(&self, model: &HwMiso) -> usize {
        self.discard.unwrap_or_else(|| model.linear.nf().max(50))
    }
}

/// `(1/N)·Σ eᵀWe` over stacked outputs given column-wise.
pub fn weighted_loss(errors: &[&[f64]], weight: &DMatrix<f64>) -> f64 {
    let n = errors.first().map_or(0, |c| c.len());
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..n {
        for (i, ei) in errors.iter().enumerate() {
            for (j, ej) in errors.iter().enumerate() {
                acc += ei[k] * weight[(i, j)] * ej[k];
            }
        }
    }
    acc / n as f64
}

/// Everything estimation needs from a dataset, borrowed once.
struct Problem<'a> {
    inputs: Vec<&'a [f64]>,
    measured: &'a [f64],
    skip: usize,
    weight: f64,
}

impl<'a> Problem<'a> {
    fn new(model: &HwMiso, data: &'a TimeSeries, config: &EstimationConfig) -> Result<Self, EstimationError> {
        let inputs = model.input_slices(data)?;
        let measured = data
            .channel(&model.output)
            .ok_or_else(|| EstimationError::MissingChannel(model.output.clone()))?;
        Ok(Problem {
            inputs,
            measured,
            skip: config.discard_for(model).min(measured.len()),
            weight: config.weight,
        })
    }

    fn rows(&self) -> usize {
        self.measured.len() - self.skip
    }

    fn loss_of(&self, y: &[f64]) -> f64 {
        let rows = self.rows();
        if rows == 0 {
            return 0.0;
        }
        let s: f64 = self.measured[self.skip..]
            .iter()
            .zip(&y[self.skip..])
            .map(|(m, s)| (m - s).powi(2))
            .sum();
        self.weight * s / rows as f64
    }

    fn loss(&self, model: &HwMiso) -> f64 {
        match model.simulate_inputs(&self.inputs) {
            Ok(y) => {
                let v = self.loss_of(&y);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn trial(&self, model: &HwMiso, theta: &[f64]) -> (f64, Option<HwMiso>) {
        match model.with_theta(theta) {
            Ok(m) => (self.loss(&m), Some(m)),
            Err(_) => (f64::INFINITY, None),
        }
    }
}

/// Weighted mean squared output error after the transient discard; +∞ when
/// the model diverges on the data.
pub fn loss(model: &HwMiso, data: &TimeSeries, config: &EstimationConfig) -> Result<f64, EstimationError> {
    Ok(Problem::new(model, data, config)?.loss(model))
}

/// Output errors `measured − simulated` after the transient discard.
pub fn prediction_errors(model: &HwMiso, data: &TimeSeries, config: &EstimationConfig) -> Result<Vec<f64>, EstimationError> {
    let p = Problem::new(model, data, config)?;
    let y = model.simulate_inputs(&p.inputs)?;
    Ok(p.measured[p.skip..].iter().zip(&y[p.skip..]).map(|(m, s)| m - s).collect())
}

/// ∂e/∂θ with e = measured − simulated, rows after the transient discard.
pub fn jacobian(model: &HwMiso, data: &TimeSeries, config: &EstimationConfig) -> Result<DMatrix<f64>, EstimationError> {
    let p = Problem::new(model, data, config)?;
    let (_, mut j) = model.sensitivities(&p.inputs, p.skip)?;
    j.neg_mut();
    if j.iter().any(|v| !v.is_finite()) {
        return Err(EstimationError::Model(ModelError::Divergence { sample: 0 }));
    }
    Ok(j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: HwMiso,
    pub loss: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub method: Method,
    /// Loss after every accepted step, starting with the initial loss.
    pub trace: Vec<f64>,
}

/// Normal-equation pieces at the current iterate: A = JᵀJ/N, r = Jᵀe/N
/// with J = ∂y/∂θ, so the Gauss-Newton step solves AΔ = r.
struct Normal {
    a: DMatrix<f64>,
    r: DVector<f64>,
}

fn normal_equations(model: &HwMiso, p: &Problem) -> Option<Normal> {
    let (y, j) = model.sensitivities(&p.inputs, p.skip).ok()?;
    let rows = p.rows().max(1) as f64;
    let e = DVector::from_iterator(
        p.rows(),
        p.measured[p.skip..].iter().zip(&y[p.skip..]).map(|(m, s)| m - s),
    );
    let mut a = gram(&j);
    a /= rows;
    let mut r = j.tr_mul(&e);
    r /= rows;
    if a.iter().chain(r.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    Some(Normal { a, r })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// JᵀJ from column dot products over cache-sized row blocks.
pub fn gram(j: &DMatrix<f64>) -> DMatrix<f64> {
    const BLOCK: usize = 256;
    let (n, p) = j.shape();
    let mut a = DMatrix::zeros(p, p);
    let data = j.as_slice();
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        for c1 in 0..p {
            let x = &data[c1 * n + start..c1 * n + end];
            for c2 in c1..p {
                a[(c1, c2)] += dot(x, &data[c2 * n + start..c2 * n + end]);
            }
        }
    }
    for c1 in 0..p {
        for c2 in c1 + 1..p {
            a[(c2, c1)] = a[(c1, c2)];
        }
    }
    a
}

struct Eigen {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    /// Indices sorted by decreasing eigenvalue, truncated to the numerical rank.
    order: Vec<usize>,
}

fn eigen(a: &DMatrix<f64>, cutoff: f64) -> Option<Eigen> {
    let se = SymmetricEigen::try_new(a.clone(), 1e-14, 0)?;
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
    let top = se.eigenvalues[order[0]].max(0.0);
    if !(top > 0.0) || !top.is_finite() {
        return None;
    }
    // Singular values of J are the square roots of the eigenvalues of JᵀJ.
    let smax = top.sqrt();
    order.retain(|&i| se.eigenvalues[i] > 0.0 && se.eigenvalues[i].sqrt() >= cutoff * smax);
    Some(Eigen {
        values: se.eigenvalues,
        vectors: se.eigenvectors,
        order,
    })
}

fn subspace_step(e: &Eigen, r: &DVector<f64>, dim: usize) -> DVector<f64> {
    let mut step = DVector::zeros(r.len());
    for &i in e.order.iter().take(dim) {
        let v = e.vectors.column(i);
        step.axpy(v.dot(r) / e.values[i], &v, 1.0);
    }
    step
}

/// Runs the selected least-squares method from `initial`.
pub fn estimate(initial: &HwMiso, data: &TimeSeries, config: &EstimationConfig) -> Result<FitResult, EstimationError> {
    config.validate()?;
    initial.validate()?;
    let p = Problem::new(initial, data, config)?;
    let n_p = initial.n_params();
    if p.rows() <= n_p {
        return Err(EstimationError::TooFewSamples { rows: p.rows(), n_p });
    }

    let mut model = initial.clone();
    let mut theta = DVector::from_vec(model.theta());
    let mut v = p.loss(&model);
    let mut trace = vec![v];
    let method = config.method;
    let finish = |model: HwMiso, v: f64, it: usize, t: Termination, trace: Vec<f64>| FitResult {
        model,
        loss: v,
        iterations: it,
        termination: t,
        method,
        trace,
    };
    if !v.is_finite() {
        return Ok(finish(model, v, 0, Termination::NumericalFailure, trace));
    }
    if n_p == 0 {
        return Ok(finish(model, v, 0, Termination::Gradient, trace));
    }

    let mut lambda = config.lm_lambda0;
    let mut eta = f64::NAN;
    let mut dim = usize::MAX;

    for it in 0..config.max_iterations {
        let Some(ne) = normal_equations(&model, &p) else {
            return Ok(finish(model, v, it, Termination::NumericalFailure, trace));
        };
        let grad_inf = 2.0 * p.weight * ne.r.amax();
        if grad_inf <= config.gradient_tolerance || v == 0.0 {
            return Ok(finish(model, v, it, Termination::Gradient, trace));
        }

        let accepted: Option<(DVector<f64>, f64, HwMiso)> = match method {
            Method::LevenbergMarquardt => {
                let mut found = None;
                for _ in 0..40 {
                    let mut damped = ne.a.clone();
                    for i in 0..n_p {
                        damped[(i, i)] += lambda;
                    }
                    let Some(chol) = damped.cholesky() else {
                        lambda *= config.lm_increase;
                        continue;
                    };
                    let step = chol.solve(&ne.r);
                    if step.iter().any(|s| !s.is_finite()) {
                        return Ok(finish(model, v, it, Termination::NumericalFailure, trace));
                    }
                    let cand = &theta + &step;
                    let (vn, m) = p.trial(&model, cand.as_slice());
                    if vn < v {
                        lambda = (lambda / config.lm_decrease).max(1e-300);
                        found = m.map(|m| (cand, vn, m));
                        break;
                    }
                    lambda *= config.lm_increase;
                    if !lambda.is_finite() {
                        break;
                    }
                }
                found
            }
            Method::SubspaceGaussNewton => {
                let Some(eig) = eigen(&ne.a, config.subspace_cutoff) else {
                    return Ok(finish(model, v, it, Termination::NumericalFailure, trace));
                };
                let step = subspace_step(&eig, &ne.r, eig.order.len());
                backtrack(&p, &model, &theta, &step, v, 30)
            }
            Method::AdaptiveSubspaceGaussNewton => {
                let Some(eig) = eigen(&ne.a, config.subspace_cutoff) else {
                    return Ok(finish(model, v, it, Termination::NumericalFailure, trace));
                };
                let rank = eig.order.len();
                dim = dim.min(rank).max(1);
                let found;
                loop {
                    let step = subspace_step(&eig, &ne.r, dim);
                    let cand = &theta + &step;
                    let (vn, m) = p.trial(&model, cand.as_slice());
                    if vn < v {
                        found = m.map(|m| (cand, vn, m));
                        dim = (dim + 1).min(rank);
                        break;
                    }
                    if dim == 1 {
                        found = backtrack(&p, &model, &theta, &(step * 0.5), v, 30);
                        break;
                    }
                    dim = dim.div_ceil(2).max(1).min(dim - 1);
                }
                found
            }
            Method::SteepestDescent => {
                let r2 = ne.r.norm_squared();
                if !eta.is_finite() {
                    let tr = ne.a.trace();
                    eta = if tr > 0.0 { 1.0 / tr } else { 1.0 };
                } else {
                    eta *= 2.0;
                }
                let mut found = None;
                for _ in 0..60 {
                    let cand = &theta + &ne.r * eta;
                    let (vn, m) = p.trial(&model, cand.as_slice());
                    // Armijo: ∇V = −2w·r, so the directional decrease is 2w·η·‖r‖².
                    if vn <= v - 1e-4 * 2.0 * p.weight * eta * r2 && vn < v {
                        found = m.map(|m| (cand, vn, m));
                        break;
                    }
                    eta *= 0.5;
                }
                found
            }
        };

        let Some((cand, vn, m)) = accepted else {
            return Ok(finish(model, v, it, Termination::LossStalled, trace));
        };
        theta = cand;
        model = m;
        v = vn;
        trace.push(v);

        let w = config.stall_window;
        if trace.len() > w {
            let old = trace[trace.len() - 1 - w];
            if (old - v) <= config.loss_tolerance * old.abs().max(f64::MIN_POSITIVE) {
                return Ok(finish(model, v, it + 1, Termination::LossStalled, trace));
            }
        }
    }
    let it = config.max_iterations;
    Ok(finish(model, v, it, Termination::MaxIter, trace))
}

fn backtrack(
    p: &Problem,
    model: &HwMiso,
    theta: &DVector<f64>,
    step: &DVector<f64>,
    v: f64,
    tries: usize,
) -> Option<(DVector<f64>, f64, HwMiso)> {
    if step.iter().any(|s| !s.is_finite()) {
        return None;
    }
    let mut t = 1.0;
    for _ in 0..tries {
        let cand = theta + step * t;
        let (vn, m) = p.trial(model, cand.as_slice());
        if vn < v {
            return m.map(|m| (cand, vn, m));
        }
        t *= 0.5;
    }
    None
}

/// One point of the structure grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Structure {
    pub family: Family,
    /// Polynomial degree, breakpoint count or unit count; ignored for identity.
    pub degree: usize,
    pub nb: usize,
    pub nf: usize,
    pub nk: usize,
}

impl Structure {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |m: String| Err(EstimationError::InvalidStructure(m));
        if self.nb == 0 {
            return bad("n_b must be ≥ 1".into());
        }
        if self.nf + 1 < self.nb {
            return bad(format!("n_f = {} < n_b − 1 = {}", self.nf, self.nb - 1));
        }
        match self.family {
            Family::Polynomial if self.degree < 1 => bad("polynomial degree must be ≥ 1".into()),
            Family::PiecewiseLinear if self.degree < 2 => bad("need ≥ 2 breakpoints".into()),
            Family::Sigmoid | Family::Wavelet if self.degree < 1 => bad("need ≥ 1 unit".into()),
            _ => Ok(()),
        }
    }

    /// Free-parameter count for a block with `inputs` input channels.
    pub fn n_params(&self, inputs: usize) -> usize {
        let nl = match self.family {
            Family::Identity => 0,
            Family::Polynomial => self.degree + 1,
            Family::PiecewiseLinear => 2 * self.degree,
            Family::Sigmoid | Family::Wavelet => 3 * self.degree + 2,
        };
        nl * (inputs + 1) + inputs * self.nb + self.nf
    }
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}[{}] nb={} nf={} nk={}",
            self.family, self.degree, self.nb, self.nf, self.nk
        )
    }
}

fn range(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Linear least squares with an SVD; `None` when rank deficient.
fn lstsq(phi: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return None;
    }
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return None;
    }
    svd.solve(y, 0.0).ok()
}

/// ARX regression `F(q)y = Σ B_i(q)q^{−n_k}u_i (+ c)`; returns numerators,
/// denominator tail and constant.
fn arx(
    inputs: &[&[f64]],
    y: &[f64],
    nb: usize,
    nf: usize,
    nk: usize,
    constant: bool,
) -> Option<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let start = nf.max(nk + nb - 1);
    let n = y.len();
    if n <= start {
        return None;
    }
    let rows = n - start;
    let cols = nf + inputs.len() * nb + usize::from(constant);
    if rows <= cols {
        return None;
    }
    let phi = DMatrix::from_fn(rows, cols, |r, c| {
        let k = r + start;
        if c < nf {
            -y[k - 1 - c]
        } else if c < nf + inputs.len() * nb {
            let i = (c - nf) / nb;
            let m = (c - nf) % nb;
            inputs[i][k - nk - m]
        } else {
            1.0
        }
    });
    let target = DVector::from_column_slice(&y[start..]);
    let sol = lstsq(&phi, &target)?;
    let f = sol.rows(0, nf).iter().copied().collect();
    let b = (0..inputs.len())
        .map(|i| sol.rows(nf + i * nb, nb).iter().copied().collect())
        .collect();
    let c = if constant { sol[cols - 1] } else { 0.0 };
    Some((b, f, c))
}

/// Builds the starting model for a structure: ARX (or FIR, or unit gain)
/// linear block inside near-identity nonlinearities scaled to the data.
pub fn initialize(
    structure: &Structure,
    inputs: &[&str],
    output: &str,
    data: &TimeSeries,
) -> Result<HwMiso, EstimationError> {
    structure.validate()?;
    let u: Vec<&[f64]> = inputs
        .iter()
        .map(|n| data.channel(n).ok_or_else(|| EstimationError::MissingChannel(n.to_string())))
        .collect::<Result<_, _>>()?;
    let y = data
        .channel(output)
        .ok_or_else(|| EstimationError::MissingChannel(output.to_string()))?;
    let Structure { family, degree, nb, nf, nk } = *structure;
    let constant = family != Family::Identity;

    let (b, f, c) = arx(&u, y, nb, nf, nk, constant)
        .and_then(|(b, f, c)| {
            let lb = LinearBlock::new(b.clone(), f.clone(), nk);
            (lb.spectral_radius() < 0.999).then_some((b, f, c))
        })
        .or_else(|| arx(&u, y, nb, 0, nk, constant).map(|(b, _, c)| (b, vec![0.0; nf], c)))
        .unwrap_or_else(|| {
            let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
            let mut b = vec![vec![0.0; nb]; u.len()];
            for bi in &mut b {
                bi[0] = 1.0;
            }
            (b, vec![0.0; nf], if constant { mean } else { 0.0 })
        });
    let linear = LinearBlock::new(b, f, nk);
    let f1 = linear.den_at_one();

    let input_nonlinearities = u
        .iter()
        .map(|ui| {
            let (lo, hi) = range(ui);
            Ok(ScaledNonlinearity::over_range(Nonlinearity::identity_like(family, degree)?, lo, hi))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut model = HwMiso {
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        output: output.to_string(),
        input_nonlinearities,
        linear,
        output_nonlinearity: ScaledNonlinearity::identity(),
        initial_state: InitialState::SteadyState,
    };
    let x = model.simulate_inputs(&u)?;
    let (lo, hi) = range(&x);
    model.output_nonlinearity = ScaledNonlinearity::over_range(Nonlinearity::identity_like(family, degree)?, lo, hi);
    if c != 0.0 {
        let shift = if f1.abs() > 1e-10 { c / f1 } else { c };
        model.output_nonlinearity.shift_output(shift);
    }
    model.validate()?;
    Ok(model)
}
