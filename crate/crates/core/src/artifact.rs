//! Persisted identification result: the MIMO model plus what produced it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::estimation::{Method, Structure};
use crate::hwmodel::HwMimo;
use crate::metrics::FitReport;
use crate::timeseries::{write_csv_to, CsvError, FrameConvention, TimeSeries};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gfm,
    Gfl,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Gfm => "gfm",
            Mode::Gfl => "gfl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSummary {
    pub output: String,
    pub index: usize,
    pub structure: Structure,
    pub method: Option<Method>,
    pub n_p: usize,
    pub estimation: FitReport,
    pub validation: FitReport,
    pub residuals_passed: bool,
    /// Grid points, fitted candidates and candidates above the threshold.
    pub grid: usize,
    pub fitted: usize,
    pub above_threshold: usize,
    pub rejections: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHashes {
    pub estimation: String,
    pub validation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub sample_time: f64,
    pub frame: FrameConvention,
    pub model: HwMimo,
    pub outputs: Vec<OutputSummary>,
    pub datasets: DatasetHashes,
}

impl ModelArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn summary(&self, output: &str) -> Option<&OutputSummary> {
        self.outputs.iter().find(|s| s.output == output)
    }
}

/// SHA-256 of the canonical CSV rendering, lowercase hex.
pub fn dataset_hash(series: &TimeSeries) -> Result<String, CsvError> {
    let mut bytes = Vec::new();
    write_csv_to(series, &mut bytes)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
