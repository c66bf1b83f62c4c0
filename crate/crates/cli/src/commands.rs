use std::path::{Path, PathBuf};

use hwid_core::artifact::{Mode, ModelArtifact};
use hwid_core::closedloop::{run_comparison, voltage_staircase, ClosedLoopError, Device, MicrogridScene};
use hwid_core::estimation::prediction_errors;
use hwid_core::hwmodel::HwMiso;
use hwid_core::metrics::{DatasetLabel, FitReport};
use hwid_core::pipeline::{generate, identify, required_channels, Datasets, PipelineError, ResidualMode};
use hwid_core::plant::PlantError;
use hwid_core::search::{Rejection, SearchError};
use hwid_core::timeseries::{read_csv, write_csv_to, CsvError, TimeSeries};
use hwid_core::validation::{analyze, ResidualReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::Staged;
use crate::plot;
use crate::Failure;

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    fn data_dir(&self) -> PathBuf {
        self.out_dir.join(&self.config.paths.data_dir)
    }

    fn artifact_path(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.unwrap_or_else(|| self.out_dir.join(&self.config.paths.artifact))
    }

    fn report_dir(&self) -> PathBuf {
        self.out_dir.join(&self.config.paths.report_dir)
    }

    fn dataset_paths(&self, est: Option<PathBuf>, val: Option<PathBuf>) -> (PathBuf, PathBuf) {
        (
            est.unwrap_or_else(|| self.data_dir().join("est.csv")),
            val.unwrap_or_else(|| self.data_dir().join("val.csv")),
        )
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::Config(_) | PipelineError::Excitation(_) => Failure::Config(msg),
            PipelineError::Plant(p) => p.into(),
            PipelineError::Search(SearchError::InvalidSpace(_) | SearchError::Pool(_)) => Failure::Config(msg),
            PipelineError::Search(SearchError::DataMismatch(_)) => Failure::Data(msg),
            PipelineError::Search(SearchError::Empty | SearchError::Exhausted { .. }) => Failure::Exhausted(msg),
            PipelineError::Model(_) => Failure::Data(msg),
            PipelineError::Csv(c) => c.into(),
        }
    }
}

impl From<PlantError> for Failure {
    fn from(e: PlantError) -> Self {
        let msg = e.to_string();
        match e {
            PlantError::Divergence { .. } | PlantError::LockLoss { .. } => Failure::Divergence(msg),
            PlantError::InvalidParams(_) | PlantError::InvalidScenario(_) => Failure::Config(msg),
            PlantError::Series(_) => Failure::Data(msg),
        }
    }
}

impl From<CsvError> for Failure {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<ClosedLoopError> for Failure {
    fn from(e: ClosedLoopError) -> Self {
        let msg = e.to_string();
        match e {
            ClosedLoopError::Run { source, .. } => match *source {
                ClosedLoopError::Divergence { .. } | ClosedLoopError::Plant(PlantError::Divergence { .. }) => {
                    Failure::Divergence(msg)
                }
                other => {
                    let inner: Failure = other.into();
                    inner.with_message(msg)
                }
            },
            ClosedLoopError::Divergence { .. } => Failure::Divergence(msg),
            ClosedLoopError::InvalidScene(_) => Failure::Config(msg),
            ClosedLoopError::MissingChannel(_) | ClosedLoopError::Series(_) => Failure::Data(msg),
            ClosedLoopError::Plant(p) => p.into(),
        }
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s.into_bytes()
}

fn csv_bytes(series: &TimeSeries) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    write_csv_to(series, &mut out)?;
    Ok(out)
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Io(format!("{}: no such file", path.display())))
    }
}

fn load_dataset(path: &Path) -> Result<TimeSeries, Failure> {
    let series = read_csv(path).map_err(|e| match e {
        CsvError::Io(e) => crate::output::io(path, e),
        other => Failure::Data(format!("{}: {other}", path.display())),
    })?;
    for ch in required_channels() {
        if series.channel(ch).is_none() {
            return Err(Failure::Data(format!("{}: missing channel `{ch}`", path.display())));
        }
    }
    Ok(series)
}

fn load_artifact(path: &Path) -> Result<ModelArtifact, Failure> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| crate::output::io(path, e))?;
    let artifact =
        ModelArtifact::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    artifact
        .model
        .validate()
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(artifact)
}

fn check_sampling(artifact: &ModelArtifact, series: &TimeSeries, path: &Path) -> Result<(), Failure> {
    let (a, b) = (artifact.sample_time, series.sample_time());
    if (a - b).abs() > 1e-9 * a.abs() {
        return Err(Failure::Data(format!(
            "{}: sample time {b} differs from the model's {a}",
            path.display()
        )));
    }
    Ok(())
}

pub fn gen_data(ctx: &Context) -> Result<(), Failure> {
    let data = generate(&ctx.config.data, ctx.config.seed)?;
    let channels = required_channels();
    let mut staged = Staged::new();
    for (name, series) in [("est.csv", &data.estimation), ("val.csv", &data.validation)] {
        let selected = series.select(&channels).map_err(|e| Failure::Data(e.to_string()))?;
        staged.add(ctx.data_dir().join(name), csv_bytes(&selected)?);
    }
    announce(&staged.commit()?);
    Ok(())
}

#[derive(Serialize)]
struct OutputRecord<'a> {
    output: &'a str,
    grid: usize,
    fitted: usize,
    above_threshold: usize,
    best: Option<usize>,
    validated: Option<usize>,
    rejections: &'a [Rejection],
}

#[derive(Serialize)]
struct IdentifyRecord<'a> {
    mode: Mode,
    seed: u64,
    residual_mode: ResidualMode,
    outputs: Vec<OutputRecord<'a>>,
}

pub fn identify_cmd(ctx: &Context, est: Option<PathBuf>, val: Option<PathBuf>) -> Result<(), Failure> {
    let (est, val) = ctx.dataset_paths(est, val);
    require_file(&est)?;
    require_file(&val)?;
    let data = Datasets {
        estimation: load_dataset(&est)?,
        validation: load_dataset(&val)?,
    };
    let cfg = &ctx.config;
    let result = identify(&cfg.identify, &data, cfg.mode, cfg.seed)?;

    let mut staged = Staged::new();
    let mut outputs = Vec::new();
    for (board, outcome) in result.boards.iter().zip(&result.outcomes) {
        staged.add(ctx.out_dir.join(format!("leaderboard_{}.json", board.output)), board.to_json().into_bytes());
        outputs.push(OutputRecord {
            output: &board.output,
            grid: board.candidates.len(),
            fitted: board.fitted(),
            above_threshold: board.count_above_threshold(),
            best: board.best,
            validated: board.validated,
            rejections: &outcome.rejections,
        });
        match board.validated {
            Some(i) => eprintln!(
                "{}: candidate {i} validated after {} rejections",
                board.output,
                outcome.rejections.len()
            ),
            None => eprintln!("{}: no candidate passed validation", board.output),
        }
    }
    staged.add(
        ctx.out_dir.join("identify.json"),
        json(&IdentifyRecord {
            mode: cfg.mode,
            seed: cfg.seed,
            residual_mode: cfg.identify.residual_mode,
            outputs,
        }),
    );
    if let Some(artifact) = &result.artifact {
        staged.add(ctx.artifact_path(None), artifact.to_json().into_bytes());
    }
    announce(&staged.commit()?);

    let exhausted = result.exhausted();
    if exhausted.is_empty() {
        return Ok(());
    }
    for o in &exhausted {
        for r in &o.rejections {
            eprintln!("  {} candidate {}: {}", o.output, r.index, r.failed.join(", "));
        }
    }
    let names: Vec<&str> = exhausted.iter().map(|o| o.output.as_str()).collect();
    Err(Failure::Exhausted(format!("no validated model for {}", names.join(", "))))
}

#[derive(Serialize)]
struct Check {
    dataset: String,
    output: String,
    fit: f64,
    fpe: f64,
    threshold: f64,
    residuals_passed: bool,
    failing: Vec<String>,
    pass: bool,
}

/// Fit on the post-transient samples together with the residual report.
fn score(block: &HwMiso, data: &TimeSeries, ctx: &Context) -> Result<(FitReport, ResidualReport), Failure> {
    let cfg = &ctx.config.identify;
    let e = prediction_errors(block, data, &cfg.estimation).map_err(|e| Failure::Data(e.to_string()))?;
    let y = data.require(&block.output).map_err(|e| Failure::Data(e.to_string()))?;
    let y = &y[y.len() - e.len()..];
    let modeled: Vec<f64> = y.iter().zip(&e).map(|(y, e)| y - e).collect();
    let fit = FitReport::compute(&block.output, DatasetLabel::Validation, y, &modeled, block.n_params())
        .map_err(|e| Failure::Data(e.to_string()))?;
    let residuals = analyze(block, data, &cfg.estimation, &cfg.residual).map_err(|e| Failure::Data(e.to_string()))?;
    Ok((fit, residuals))
}

pub fn validate(ctx: &Context, artifact: Option<PathBuf>, datasets: Vec<PathBuf>) -> Result<(), Failure> {
    let path = ctx.artifact_path(artifact);
    let artifact = load_artifact(&path)?;
    let datasets = if datasets.is_empty() {
        vec![ctx.dataset_paths(None, None).1]
    } else {
        datasets
    };
    for d in &datasets {
        require_file(d)?;
    }
    let threshold = ctx.config.identify.space.fit_threshold;
    let enforce = ctx.config.identify.residual_mode == ResidualMode::Enforce;
    let mut checks = Vec::new();
    for d in &datasets {
        let data = load_dataset(d)?;
        check_sampling(&artifact, &data, d)?;
        for block in &artifact.model.blocks {
            let (fit, residuals) = score(block, &data, ctx)?;
            let mut failing = residuals.failing_checks();
            if !(fit.fit >= threshold) {
                failing.insert(0, "fit".to_string());
            }
            let pass = fit.fit >= threshold && (!enforce || residuals.passed());
            eprintln!(
                "{} {}: fit {:.3} %, {}",
                d.display(),
                block.output,
                fit.fit,
                if pass { "pass".to_string() } else { format!("fail ({})", failing.join(", ")) }
            );
            checks.push(Check {
                dataset: d.display().to_string(),
                output: block.output.clone(),
                fit: fit.fit,
                fpe: fit.fpe,
                threshold,
                residuals_passed: residuals.passed(),
                failing,
                pass,
            });
        }
    }
    let mut staged = Staged::new();
    staged.add(ctx.out_dir.join("validation.json"), json(&checks));
    staged.commit()?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} on {}: {}", c.output, c.dataset, c.failing.join(", ")))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(failed.join("; ")))
    }
}

#[derive(Serialize)]
struct SimulateRecord<'a> {
    summary: &'a hwid_core::closedloop::ComparisonSummary,
    max_voltage_deviation: f64,
    max_frequency_deviation: f64,
    pass: bool,
}

pub fn simulate(ctx: &Context, artifact: Option<PathBuf>) -> Result<(), Failure> {
    let artifact = load_artifact(&ctx.artifact_path(artifact))?;
    let cfg = &ctx.config;
    if artifact.mode != Mode::Gfm || cfg.mode != Mode::Gfm {
        return Err(Failure::Config("closed-loop simulation hosts grid-forming models only".into()));
    }
    let sim = &cfg.simulate;
    let schedule =
        voltage_staircase(&sim.levels, sim.hold, artifact.sample_time).map_err(|e| Failure::Config(e.to_string()))?;
    let mut scene = MicrogridScene::new(cfg.data.plant.clone(), schedule);
    scene.preroll = sim.preroll;
    scene.solver_step = cfg.data.solver_step;
    let comparison = run_comparison(&scene, &scene, Device::Surrogate(&artifact.model))?;

    let s = &comparison.summary;
    let dv = ["u_d", "u_q"].iter().filter_map(|c| s.deviation(c)).fold(0.0f64, |m, d| m.max(d.max_abs));
    let df = s.deviation("f").map_or(f64::INFINITY, |d| d.max_abs);
    let pass = dv <= sim.max_voltage_deviation && df <= sim.max_frequency_deviation;

    let dir = ctx.report_dir();
    let mut staged = Staged::new();
    staged.add(dir.join("comparison.csv"), csv_bytes(&comparison.series)?);
    let time: Vec<f64> = (0..comparison.series.len()).map(|k| comparison.series.time(k)).collect();
    for ch in ["u_d", "u_q", "f"] {
        let p = comparison.series.require(&format!("{ch}_plant")).map_err(|e| Failure::Data(e.to_string()))?;
        let m = comparison.series.require(&format!("{ch}_model")).map_err(|e| Failure::Data(e.to_string()))?;
        staged.add(
            dir.join(format!("comparison_{ch}.svg")),
            plot::lines(&format!("{ch}: plant vs model"), &time, &[("plant", p), ("model", m)]),
        );
    }
    staged.add(
        dir.join("comparison.json"),
        json(&SimulateRecord {
            summary: s,
            max_voltage_deviation: dv,
            max_frequency_deviation: df,
            pass,
        }),
    );
    announce(&staged.commit()?);
    eprintln!("max |du_dq| = {dv:.5} pu, max |df| = {df:.5} Hz");
    if pass {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "closed-loop deviation above limits (|du_dq| {dv:.4} > {} or |df| {df:.4} > {})",
            sim.max_voltage_deviation, sim.max_frequency_deviation
        )))
    }
}

#[derive(Serialize)]
struct ReportEntry {
    output: String,
    fit: f64,
    fpe: f64,
    residuals_passed: bool,
    failing: Vec<String>,
}

pub fn report(ctx: &Context, artifact: Option<PathBuf>, dataset: Option<PathBuf>) -> Result<(), Failure> {
    let artifact = load_artifact(&ctx.artifact_path(artifact))?;
    let path = dataset.unwrap_or_else(|| ctx.dataset_paths(None, None).1);
    require_file(&path)?;
    let data = load_dataset(&path)?;
    check_sampling(&artifact, &data, &path)?;

    let dir = ctx.report_dir();
    let mut staged = Staged::new();
    let mut entries = Vec::new();
    for block in &artifact.model.blocks {
        let (fit, residuals) = score(block, &data, ctx)?;
        let mut table = Vec::new();
        residuals.write_csv(&mut table).map_err(|e| Failure::Io(e.to_string()))?;
        staged.add(dir.join(format!("{}_correlation.csv", block.output)), table);
        staged.add(dir.join(format!("{}.svg", block.output)), figure(block, &data, &residuals, &fit)?);
        entries.push(ReportEntry {
            output: block.output.clone(),
            fit: fit.fit,
            fpe: fit.fpe,
            residuals_passed: residuals.passed(),
            failing: residuals.failing_checks(),
        });
    }
    staged.add(dir.join("report.json"), json(&entries));
    announce(&staged.commit()?);
    Ok(())
}

/// Stacked panels: simulated vs measured output, residual autocorrelation,
/// then one cross-correlation per input.
fn figure(block: &HwMiso, data: &TimeSeries, r: &ResidualReport, fit: &FitReport) -> Result<String, Failure> {
    let y = data.require(&block.output).map_err(|e| Failure::Data(e.to_string()))?;
    let sim = block.simulate(data).map_err(|e| Failure::Data(e.to_string()))?;
    let time: Vec<f64> = (0..data.len()).map(|k| data.time(k)).collect();
    let l = r.max_lag as i64;
    let mut panels = vec![plot::lines(
        &format!("{}: fit {:.2} %", block.output, fit.fit),
        &time,
        &[("measured", y), ("model", &sim)],
    )];
    let pos: Vec<i64> = (0..=l).collect();
    panels.push(plot::stems("residual autocorrelation", &pos, &r.autocorrelation, r.bound));
    let all: Vec<i64> = (-l..=l).collect();
    for c in &r.cross {
        panels.push(plot::stems(&format!("cross-correlation with {}", c.input), &all, &c.values, r.bound));
    }
    Ok(plot::stack(&panels))
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}
