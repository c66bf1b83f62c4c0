//! Run configuration: one TOML file with a section per command. Any field
//! left out falls back to the defaults of the configured mode.

use std::path::{Path, PathBuf};

use hwid_core::artifact::Mode;
use hwid_core::pipeline::{DataConfig, IdentifyConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Directory for `est.csv` and `val.csv`, relative to the output directory.
    pub data_dir: PathBuf,
    pub artifact: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: "data".into(),
            artifact: "model.json".into(),
            report_dir: "report".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    /// `u_ref` levels of the closed-loop staircase.
    pub levels: Vec<f64>,
    pub hold: f64,
    pub preroll: f64,
    /// Pass limits on the plant/model deviation.
    pub max_voltage_deviation: f64,
    pub max_frequency_deviation: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            levels: vec![1.0, 1.05, 1.0, 0.95, 1.0],
            hold: 2.0,
            preroll: 2.0,
            max_voltage_deviation: 0.05,
            max_frequency_deviation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub identify: IdentifyConfig,
    pub simulate: SimulateConfig,
}

impl RunConfig {
    pub fn for_mode(mode: Mode) -> Self {
        RunConfig {
            mode,
            seed: 1,
            paths: Paths::default(),
            data: DataConfig::for_mode(mode),
            identify: IdentifyConfig::for_mode(mode),
            simulate: SimulateConfig::default(),
        }
    }

    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        let mode = match user.get("mode") {
            Some(v) => v.clone().try_into::<Mode>().map_err(|e| Failure::Config(format!("mode: {e}")))?,
            None => Mode::Gfm,
        };
        let mut merged = toml::Table::try_from(RunConfig::for_mode(mode)).map_err(|e| Failure::Config(e.to_string()))?;
        merge(&mut merged, user);
        let config: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
        if config.data.mode() != config.mode {
            return Err(Failure::Config(format!(
                "data.plant is a {} plant but mode is {}",
                config.data.mode(),
                config.mode
            )));
        }
        Ok(config)
    }
}

/// Overlays `user` onto `base`; tables merge key by key, anything else replaces.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => {
                // a different plant kind replaces the whole plant table
                let kind_changed = matches!((b.get("kind"), u.get("kind")), (Some(x), Some(y)) if x != y);
                if kind_changed {
                    *b = u;
                } else {
                    merge(b, u);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_mode_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::for_mode(Mode::Gfm));
        assert_eq!(RunConfig::parse("mode = \"gfl\"").unwrap(), RunConfig::for_mode(Mode::Gfl));
    }

    #[test]
    fn nested_fields_override_individually() {
        let c = RunConfig::parse("seed = 9\n[identify.space]\nfit_threshold = 90.0\n[data]\nduration = 5.0\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.identify.space.fit_threshold, 90.0);
        assert_eq!(c.identify.space.nb, IdentifyConfig::for_mode(Mode::Gfm).space.nb);
        assert_eq!(c.data.duration, 5.0);
        assert_eq!(c.data.plant, DataConfig::for_mode(Mode::Gfm).plant);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in ["mode = \"vsm\"", "seed = \"x\"", "[data]\nduration = [1]", "not toml"] {
            assert!(matches!(RunConfig::parse(text), Err(Failure::Config(_))), "{text}");
        }
    }

    #[test]
    fn plant_kind_must_match_mode() {
        assert!(matches!(
            RunConfig::parse("mode = \"gfm\"\n[data.plant]\nkind = \"gfl\""),
            Err(Failure::Config(_))
        ));
    }
}
