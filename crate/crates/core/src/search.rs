//! Exhaustive structure search with the ε-guarded best-model update and the
//! downward validation cascade.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{estimate, initialize, EstimationConfig, Method, Structure, Termination};
use crate::hwmodel::{Family, HwMiso};
use crate::metrics::{DatasetLabel, FitReport};
use crate::timeseries::TimeSeries;
use crate::validation::{analyze, ResidualConfig, ResidualReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("datasets disagree: {0}")]
    DataMismatch(String),
    #[error("no candidate could be fitted")]
    Empty,
    #[error("validation cascade exhausted after {} rejections", log.len())]
    Exhausted { log: Vec<Rejection> },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub families: Vec<Family>,
    pub polynomial_degree: (usize, usize),
    pub breakpoints: (usize, usize),
    pub units: (usize, usize),
    pub nb: (usize, usize),
    pub nf: (usize, usize),
    pub nk: (usize, usize),
    /// Percent.
    pub fit_threshold: f64,
    /// Relative FPE closeness.
    pub eps1: f64,
    /// Absolute fit closeness, percentage points.
    pub eps2: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            families: vec![Family::Polynomial, Family::PiecewiseLinear, Family::Sigmoid, Family::Wavelet],
            polynomial_degree: (2, 4),
            breakpoints: (6, 12),
            units: (4, 10),
            nb: (1, 3),
            nf: (1, 4),
            nk: (0, 2),
            fit_threshold: 92.0,
            eps1: 0.10,
            eps2: 1.0,
        }
    }
}

fn range((lo, hi): (usize, usize)) -> std::ops::RangeInclusive<usize> {
    lo..=hi
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidSpace(m));
        if self.families.is_empty() {
            return bad("no nonlinearity families".into());
        }
        for (name, r) in [
            ("polynomial_degree", self.polynomial_degree),
            ("breakpoints", self.breakpoints),
            ("units", self.units),
            ("nb", self.nb),
            ("nf", self.nf),
            ("nk", self.nk),
        ] {
            if r.0 > r.1 {
                return bad(format!("{name} range {:?} is empty", r));
            }
        }
        if !(self.fit_threshold > 0.0 && self.fit_threshold < 100.0) {
            return bad("fit threshold must lie in (0, 100)".into());
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return bad("ε₁ and ε₂ must be positive".into());
        }
        Ok(())
    }

    fn degrees(&self, family: Family) -> std::ops::RangeInclusive<usize> {
        match family {
            Family::Identity => 0..=0,
            Family::Polynomial => range(self.polynomial_degree),
            Family::PiecewiseLinear => range(self.breakpoints),
            Family::Sigmoid | Family::Wavelet => range(self.units),
        }
    }

    /// Every grid point in enumeration order; structurally invalid points
    /// keep their slot and carry the reason.
    pub fn enumerate(&self) -> Vec<Result<Structure, (Structure, String)>> {
        let mut out = Vec::new();
        for &family in &self.families {
            for degree in self.degrees(family) {
                for nb in range(self.nb) {
                    for nf in range(self.nf) {
                        for nk in range(self.nk) {
                            let s = Structure { family, degree, nb, nf, nk };
                            out.push(s.validate().map(|_| s).map_err(|e| (s, e.to_string())));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn cardinality(&self) -> usize {
        self.enumerate().len()
    }
}

/// Parameter count above which the subspace methods take over.
pub const LARGE_PARAMETERIZATION: usize = 60;

pub fn decide_search_algorithm(structure: &Structure, inputs: usize) -> Method {
    if structure.n_params(inputs) > LARGE_PARAMETERIZATION {
        match structure.family {
            Family::Sigmoid | Family::Wavelet => Method::AdaptiveSubspaceGaussNewton,
            _ => Method::SubspaceGaussNewton,
        }
    } else {
        Method::LevenbergMarquardt
    }
}

/// Method for a second attempt, if the first one warrants it.
pub fn retry_method(first: Method, termination: Termination) -> Option<Method> {
    (first == Method::LevenbergMarquardt && termination == Termination::NumericalFailure)
        .then_some(Method::SteepestDescent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Fitted,
    Failed,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub structure: Structure,
    pub status: CandidateStatus,
    pub method: Option<Method>,
    pub n_p: usize,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub loss: Option<f64>,
    pub estimation: Option<FitReport>,
    pub validation: Option<FitReport>,
    pub failure: Option<String>,
    pub model: Option<HwMiso>,
}

impl Candidate {
    fn scored(&self) -> Option<(f64, f64)> {
        let r = self.estimation.as_ref()?;
        (r.fit.is_finite() && r.fpe.is_finite()).then_some((r.fit, r.fpe))
    }

    fn unfitted(index: usize, structure: Structure, status: CandidateStatus, reason: String) -> Self {
        Candidate {
            index,
            structure,
            status,
            method: None,
            n_p: 0,
            iterations: 0,
            termination: None,
            loss: None,
            estimation: None,
            validation: None,
            failure: Some(reason),
            model: None,
        }
    }
}

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 && a.1 < b.1
}

/// True when `challenger` should replace `best`.
///
/// Strict dominance always wins. Otherwise a fit gain is accepted while the
/// FPE stays within `(1 + ε₁)·FPE_best`, and an FPE reduction is accepted
/// while the fit stays within ε₂ points. Exact ties go to the lower index.
pub fn challenger_wins(best: &Candidate, challenger: &Candidate, eps1: f64, eps2: f64) -> bool {
    let Some(c) = challenger.scored() else {
        return false;
    };
    let Some(b) = best.scored() else {
        return true;
    };
    if dominates(c, b) {
        return true;
    }
    if c.0 > b.0 && c.1 <= b.1 + eps1 * b.1.abs() {
        return true;
    }
    if c.1 < b.1 && c.0 >= b.0 - eps2 {
        return true;
    }
    c == b && challenger.index < best.index
}

pub fn compare_and_update<'a>(best: &'a Candidate, challenger: &'a Candidate, eps1: f64, eps2: f64) -> &'a Candidate {
    if challenger_wins(best, challenger, eps1, eps2) {
        challenger
    } else {
        best
    }
}

/// Index-order fold of `compare_and_update`, then a repair pass so that no
/// stored candidate strictly dominates the result.
fn select_best(candidates: &[&Candidate], eps1: f64, eps2: f64) -> Option<usize> {
    let scored: Vec<&Candidate> = candidates.iter().copied().filter(|c| c.scored().is_some()).collect();
    let mut best = *scored.first()?;
    for c in &scored[1..] {
        best = compare_and_update(best, c, eps1, eps2);
    }
    loop {
        let b = best.scored()?;
        let dominator = scored
            .iter()
            .filter(|c| dominates(c.scored().unwrap_or((f64::NEG_INFINITY, f64::INFINITY)), b))
            .max_by(|x, y| {
                let (fx, fy) = (x.scored().map_or(f64::NEG_INFINITY, |s| s.0), y.scored().map_or(f64::NEG_INFINITY, |s| s.0));
                fx.total_cmp(&fy).then_with(|| y.index.cmp(&x.index))
            });
        match dominator {
            Some(d) => best = d,
            None => return Some(best.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub output: String,
    pub inputs: Vec<String>,
    pub fit_threshold: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub candidates: Vec<Candidate>,
    pub best: Option<usize>,
    /// Candidates whose estimation fit exceeds the threshold.
    pub above_threshold: usize,
    /// Set once the cascade has run: the validated index, if any.
    pub validated: Option<usize>,
}

impl Leaderboard {
    pub fn candidate(&self, index: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.index == index)
    }

    pub fn best_candidate(&self) -> Option<&Candidate> {
        self.best.and_then(|i| self.candidate(i))
    }

    pub fn count_above_threshold(&self) -> usize {
        self.candidates
            .iter()
            .filter(|c| c.estimation.as_ref().is_some_and(|r| r.fit > self.fit_threshold))
            .count()
    }

    pub fn fitted(&self) -> usize {
        self.candidates.iter().filter(|c| c.status == CandidateStatus::Fitted).count()
    }

    /// Scored candidates ordered by repeated best-selection.
    pub fn ranking(&self) -> Vec<usize> {
        let mut pool: Vec<&Candidate> = self.candidates.iter().filter(|c| c.scored().is_some()).collect();
        let mut order = Vec::with_capacity(pool.len());
        while let Some(i) = select_best(&pool, self.eps1, self.eps2) {
            order.push(i);
            pool.retain(|c| c.index != i);
        }
        order
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("leaderboard serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn check_datasets(est: &TimeSeries, val: &TimeSeries, channels: &[&str]) -> Result<(), SearchError> {
    if (est.sample_time() - val.sample_time()).abs() > 1e-12 * est.sample_time() {
        return Err(SearchError::DataMismatch(format!(
            "sample times {} and {}",
            est.sample_time(),
            val.sample_time()
        )));
    }
    for ch in channels {
        for (label, d) in [("estimation", est), ("validation", val)] {
            if d.channel(ch).is_none() {
                return Err(SearchError::DataMismatch(format!("{label} data lacks `{ch}`")));
            }
        }
    }
    Ok(())
}

fn report(model: &HwMiso, data: &TimeSeries, config: &EstimationConfig, label: DatasetLabel) -> Result<FitReport, String> {
    let y = model.simulate(data).map_err(|e| e.to_string())?;
    let skip = config.discard_for(model).min(y.len());
    let measured = &data.channel(&model.output).ok_or("missing output")?[skip..];
    FitReport::compute(&model.output, label, measured, &y[skip..], model.n_params()).map_err(|e| e.to_string())
}

fn fit_candidate(
    index: usize,
    structure: Structure,
    inputs: &[&str],
    output: &str,
    est: &TimeSeries,
    val: &TimeSeries,
    config: &EstimationConfig,
) -> Candidate {
    let failed = |reason: String| Candidate::unfitted(index, structure, CandidateStatus::Failed, reason);
    let initial = match initialize(&structure, inputs, output, est) {
        Ok(m) => m,
        Err(e) => return failed(format!("initialization: {e}")),
    };
    let method = decide_search_algorithm(&structure, inputs.len());
    let run = |method: Method| {
        estimate(
            &initial,
            est,
            &EstimationConfig {
                method,
                ..config.clone()
            },
        )
    };
    let mut result = match run(method) {
        Ok(r) => r,
        Err(e) => return failed(format!("estimation: {e}")),
    };
    if let Some(retry) = retry_method(method, result.termination) {
        match run(retry) {
            Ok(r) => result = r,
            Err(e) => return failed(format!("estimation retry: {e}")),
        }
    }
    let mut cand = Candidate {
        index,
        structure,
        status: CandidateStatus::Fitted,
        method: Some(result.method),
        n_p: result.model.n_params(),
        iterations: result.iterations,
        termination: Some(result.termination),
        loss: result.loss.is_finite().then_some(result.loss),
        estimation: None,
        validation: None,
        failure: None,
        model: None,
    };
    if result.termination == Termination::NumericalFailure || !result.loss.is_finite() {
        cand.status = CandidateStatus::Failed;
        cand.failure = Some("numerical failure".into());
        return cand;
    }
    match (
        report(&result.model, est, config, DatasetLabel::Estimation),
        report(&result.model, val, config, DatasetLabel::Validation),
    ) {
        (Ok(e), v) => {
            cand.estimation = Some(e);
            cand.validation = v.ok();
        }
        (Err(e), _) => {
            cand.status = CandidateStatus::Failed;
            cand.failure = Some(format!("scoring: {e}"));
            return cand;
        }
    }
    cand.model = Some(result.model);
    cand
}

/// Fits every grid point for one output. `workers = 0` uses all cores; the
/// result does not depend on the worker count.
pub fn run_search(
    space: &SearchSpace,
    est: &TimeSeries,
    val: &TimeSeries,
    inputs: &[&str],
    output: &str,
    config: &EstimationConfig,
    workers: usize,
) -> Result<Leaderboard, SearchError> {
    space.validate()?;
    config.validate().map_err(|e| SearchError::InvalidSpace(e.to_string()))?;
    let mut channels = inputs.to_vec();
    channels.push(output);
    check_datasets(est, val, &channels)?;

    let grid = space.enumerate();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SearchError::Pool(e.to_string()))?;
    let candidates: Vec<Candidate> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(index, point)| match point {
                Ok(s) => fit_candidate(index, *s, inputs, output, est, val, config),
                Err((s, reason)) => Candidate::unfitted(index, *s, CandidateStatus::Invalid, reason.clone()),
            })
            .collect()
    });

    let refs: Vec<&Candidate> = candidates.iter().collect();
    let best = select_best(&refs, space.eps1, space.eps2);
    let mut board = Leaderboard {
        output: output.to_string(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        fit_threshold: space.fit_threshold,
        eps1: space.eps1,
        eps2: space.eps2,
        candidates,
        best,
        above_threshold: 0,
        validated: None,
    };
    board.above_threshold = board.count_above_threshold();
    if best.is_none() {
        return Err(SearchError::Empty);
    }
    Ok(board)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub structure: Structure,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validated {
    pub index: usize,
    pub model: HwMiso,
    pub validation: FitReport,
    pub residuals: ResidualReport,
    pub rejections: Vec<Rejection>,
}

/// Names of the checks `candidate` fails on the validation data. With
/// `gate_residuals` off the residual analysis is still run and returned but
/// never fails the candidate.
pub fn validation_checks(
    candidate: &Candidate,
    val: &TimeSeries,
    threshold: f64,
    estimation: &EstimationConfig,
    residual: &ResidualConfig,
    gate_residuals: bool,
) -> (Vec<String>, Option<FitReport>, Option<ResidualReport>) {
    let Some(model) = candidate.model.as_ref() else {
        return (vec!["model".into()], None, None);
    };
    let mut failed = Vec::new();
    let fit = report(model, val, estimation, DatasetLabel::Validation).ok();
    match &fit {
        Some(r) => {
            if !(r.fit >= threshold) {
                failed.push("validation_fit".into());
            }
            if !r.fpe.is_finite() {
                failed.push("validation_fpe".into());
            }
        }
        None => failed.push("validation_fit".into()),
    }
    match crate::estimation::loss(model, val, estimation) {
        Ok(v) if v.is_finite() => {}
        _ => failed.push("validation_loss".into()),
    }
    let residuals = match analyze(model, val, estimation, residual) {
        Ok(r) => {
            if gate_residuals {
                failed.extend(r.failing_checks());
            }
            Some(r)
        }
        Err(_) => {
            failed.push("residual_analysis".into());
            None
        }
    };
    (failed, fit, residuals)
}

/// Walks the ranking from the best candidate down and returns the first that
/// passes every validation check.
pub fn validation_cascade(
    board: &Leaderboard,
    val: &TimeSeries,
    estimation: &EstimationConfig,
    residual: &ResidualConfig,
) -> Result<Validated, SearchError> {
    validation_cascade_with(board, val, estimation, residual, true)
}

pub fn validation_cascade_with(
    board: &Leaderboard,
    val: &TimeSeries,
    estimation: &EstimationConfig,
    residual: &ResidualConfig,
    gate_residuals: bool,
) -> Result<Validated, SearchError> {
    let mut rejections = Vec::new();
    for index in board.ranking() {
        let Some(c) = board.candidate(index) else { continue };
        let (failed, fit, residuals) =
            validation_checks(c, val, board.fit_threshold, estimation, residual, gate_residuals);
        if failed.is_empty() {
            if let (Some(model), Some(validation), Some(residuals)) = (c.model.clone(), fit, residuals) {
                return Ok(Validated {
                    index,
                    model,
                    validation,
                    residuals,
                    rejections,
                });
            }
        }
        rejections.push(Rejection {
            index,
            structure: c.structure,
            failed,
        });
    }
    Err(SearchError::Exhausted { log: rejections })
}

/// Sort helper for reports: fitted candidates by descending estimation fit.
pub fn by_fit(a: &Candidate, b: &Candidate) -> Ordering {
    let fa = a.estimation.as_ref().map_or(f64::NEG_INFINITY, |r| r.fit);
    let fb = b.estimation.as_ref().map_or(f64::NEG_INFINITY, |r| r.fit);
    fb.total_cmp(&fa).then_with(|| a.index.cmp(&b.index))
}
