//! End-to-end procedure: generate estimation/validation data from a plant,
//! search every output, validate, and assemble the MIMO artifact.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{dataset_hash, DatasetHashes, Mode, ModelArtifact, OutputSummary, ARTIFACT_VERSION};
use crate::closedloop::{CURRENT_INPUTS, VOLTAGE_OUTPUTS};
use crate::estimation::EstimationConfig;
use crate::excitation::{build_signals, ExcitationError, ExcitationSpec};
use crate::hwmodel::{HwMimo, ModelError};
use crate::plant::{simulate, GflParams, GfmParams, MeasurementNoise, PlantError, PlantParams, PlantScenario};
use crate::search::{run_search, validation_cascade_with, Leaderboard, Rejection, SearchError, SearchSpace, Validated};
use crate::timeseries::{CsvError, FrameConvention, TimeSeries};
use crate::validation::ResidualConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelExcitation {
    pub channel: String,
    pub bounds: (f64, f64),
    #[serde(default)]
    pub nominal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub plant: PlantParams,
    pub excitation: Vec<ChannelExcitation>,
    pub duration: f64,
    pub sample_time: f64,
    pub levels: usize,
    pub hold_range: (f64, f64),
    pub settle_time: f64,
    pub solver_step: f64,
    pub preroll: f64,
    /// Relative standard deviation of output measurement noise.
    pub noise: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::for_mode(Mode::Gfm)
    }
}

impl DataConfig {
    pub fn for_mode(mode: Mode) -> Self {
        let ch = |channel: &str, bounds| ChannelExcitation {
            channel: channel.into(),
            bounds,
            nominal: None,
        };
        let (plant, excitation) = match mode {
            Mode::Gfm => (
                PlantParams::Gfm(GfmParams::default()),
                vec![ch("u_ref", (0.97, 1.03)), ch("f_ref", (49.95, 50.05))],
            ),
            Mode::Gfl => (
                PlantParams::Gfl(GflParams::default()),
                vec![ch("i_d_ref", (0.3, 0.7)), ch("i_q_ref", (-0.1, 0.1))],
            ),
        };
        let spec = ExcitationSpec::default();
        DataConfig {
            plant,
            excitation,
            duration: 20.0,
            sample_time: spec.sample_time,
            levels: spec.levels,
            hold_range: spec.hold_range,
            settle_time: spec.settle_time,
            solver_step: 5e-5,
            preroll: 2.0,
            noise: None,
        }
    }

    pub fn mode(&self) -> Mode {
        match self.plant {
            PlantParams::Gfm(_) => Mode::Gfm,
            PlantParams::Gfl(_) => Mode::Gfl,
        }
    }

    fn spec(&self, c: &ChannelExcitation, seed: u64) -> ExcitationSpec {
        ExcitationSpec {
            duration: self.duration,
            sample_time: self.sample_time,
            levels: self.levels,
            bounds: c.bounds,
            hold_range: self.hold_range,
            settle_time: self.settle_time,
            seed,
            nominal: c.nominal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub estimation: TimeSeries,
    pub validation: TimeSeries,
}

/// One plant record. Every random draw is seeded from `seed`.
pub fn simulate_record(config: &DataConfig, seed: u64) -> Result<TimeSeries, PipelineError> {
    if config.excitation.is_empty() {
        return Err(PipelineError::Config("no excitation channels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<(String, ExcitationSpec)> = config
        .excitation
        .iter()
        .map(|c| (c.channel.clone(), config.spec(c, rng.next_u64())))
        .collect();
    let named: Vec<(&str, &ExcitationSpec)> = specs.iter().map(|(n, s)| (n.as_str(), s)).collect();
    let excitation = build_signals(&named)?;
    let noise_seed = rng.next_u64();
    let scenario = PlantScenario {
        solver_step: config.solver_step,
        preroll: config.preroll,
        noise: config.noise.filter(|s| *s > 0.0).map(|relative_std| MeasurementNoise {
            relative_std,
            seed: noise_seed,
        }),
        ..PlantScenario::new(config.plant.clone(), excitation)
    };
    Ok(simulate(&scenario)?)
}

/// Estimation and validation records from independent seeds derived from
/// the global one.
pub fn generate(config: &DataConfig, seed: u64) -> Result<Datasets, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (rng.next_u64(), rng.next_u64());
    Ok(Datasets {
        estimation: simulate_record(config, a)?,
        validation: simulate_record(config, b)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// Residual tests are part of validation.
    #[default]
    Enforce,
    /// Residual tests are computed and recorded but do not reject.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub space: SearchSpace,
    pub estimation: EstimationConfig,
    pub residual: ResidualConfig,
    pub residual_mode: ResidualMode,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// 0 uses every core.
    pub workers: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig::for_mode(Mode::Gfm)
    }
}

impl IdentifyConfig {
    pub fn for_mode(mode: Mode) -> Self {
        let space = match mode {
            Mode::Gfm => SearchSpace::default(),
            // current-reference dynamics need one more pole/zero pair
            Mode::Gfl => SearchSpace {
                nb: (1, 4),
                ..SearchSpace::default()
            },
        };
        IdentifyConfig {
            space,
            estimation: EstimationConfig::default(),
            residual: ResidualConfig::default(),
            residual_mode: ResidualMode::Enforce,
            inputs: CURRENT_INPUTS.iter().map(|s| s.to_string()).collect(),
            outputs: ["f", "u_d", "u_q"].iter().map(|s| s.to_string()).collect(),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputOutcome {
    pub output: String,
    pub validated: Option<Validated>,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub boards: Vec<Leaderboard>,
    pub outcomes: Vec<OutputOutcome>,
    /// Present only when every output has a validated candidate.
    pub artifact: Option<ModelArtifact>,
}

impl Identification {
    pub fn exhausted(&self) -> Vec<&OutputOutcome> {
        self.outcomes.iter().filter(|o| o.validated.is_none()).collect()
    }

    pub fn board(&self, output: &str) -> Option<&Leaderboard> {
        self.boards.iter().find(|b| b.output == output)
    }

    /// MIMO model from each output's best-ranked candidate, validated or not.
    pub fn best_ranked_model(&self) -> Result<HwMimo, PipelineError> {
        let blocks = self
            .boards
            .iter()
            .map(|b| {
                b.best_candidate()
                    .and_then(|c| c.model.clone())
                    .ok_or_else(|| PipelineError::Search(SearchError::Empty))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HwMimo::new(blocks)?)
    }
}

/// Runs the search and the cascade for every configured output.
pub fn identify(
    config: &IdentifyConfig,
    data: &Datasets,
    mode: Mode,
    seed: u64,
) -> Result<Identification, PipelineError> {
    if config.outputs.is_empty() || config.inputs.is_empty() {
        return Err(PipelineError::Config("inputs and outputs must be non-empty".into()));
    }
    let inputs: Vec<&str> = config.inputs.iter().map(String::as_str).collect();
    let gate = config.residual_mode == ResidualMode::Enforce;
    let mut boards = Vec::new();
    let mut outcomes = Vec::new();
    for output in &config.outputs {
        let mut board = run_search(
            &config.space,
            &data.estimation,
            &data.validation,
            &inputs,
            output,
            &config.estimation,
            config.workers,
        )?;
        let outcome = match validation_cascade_with(&board, &data.validation, &config.estimation, &config.residual, gate) {
            Ok(v) => {
                board.validated = Some(v.index);
                OutputOutcome {
                    output: output.clone(),
                    rejections: v.rejections.clone(),
                    validated: Some(v),
                }
            }
            Err(SearchError::Exhausted { log }) => OutputOutcome {
                output: output.clone(),
                validated: None,
                rejections: log,
            },
            Err(e) => return Err(e.into()),
        };
        boards.push(board);
        outcomes.push(outcome);
    }

    let artifact = if outcomes.iter().all(|o| o.validated.is_some()) {
        let mut blocks = Vec::new();
        let mut summaries = Vec::new();
        for (board, outcome) in boards.iter().zip(&outcomes) {
            let v = outcome.validated.as_ref().expect("checked above");
            let c = board.candidate(v.index).expect("validated index is on the board");
            blocks.push(v.model.clone());
            summaries.push(OutputSummary {
                output: outcome.output.clone(),
                index: v.index,
                structure: c.structure,
                method: c.method,
                n_p: c.n_p,
                estimation: c.estimation.clone().expect("ranked candidates are scored"),
                validation: v.validation.clone(),
                residuals_passed: v.residuals.passed(),
                grid: board.candidates.len(),
                fitted: board.fitted(),
                above_threshold: board.above_threshold,
                rejections: v.rejections.len(),
            });
        }
        Some(ModelArtifact {
            version: ARTIFACT_VERSION,
            mode,
            seed,
            sample_time: data.estimation.sample_time(),
            frame: FrameConvention::default(),
            model: HwMimo::new(blocks)?,
            outputs: summaries,
            datasets: DatasetHashes {
                estimation: dataset_hash(&data.estimation)?,
                validation: dataset_hash(&data.validation)?,
            },
        })
    } else {
        None
    };
    Ok(Identification {
        boards,
        outcomes,
        artifact,
    })
}

/// Channels every dataset must carry for identification and adaptation.
pub fn required_channels() -> Vec<&'static str> {
    CURRENT_INPUTS.iter().chain(VOLTAGE_OUTPUTS.iter()).copied().collect()
}
