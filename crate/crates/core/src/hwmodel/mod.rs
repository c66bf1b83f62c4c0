//! Hammerstein-Wiener models: static input maps, a discrete-time linear
//! block, and a static output map.

mod linear;
mod mimo;
mod miso;
mod nonlinearity;

use thiserror::Error;

use crate::timeseries::SeriesError;

pub use linear::{InitialState, LinearBlock};
pub use mimo::{HwMimo, MimoRunner};
pub use miso::{HwMiso, MisoRunner};
pub use nonlinearity::{Family, Nonlinearity, ScaledNonlinearity, Unit, UnitNetwork};


#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model structure: {0}")]
    InvalidStructure(String),
    #[error("missing input channel `{0}`")]
    MissingChannel(String),
    #[error("parameter vector has {found} entries, model needs {expected}")]
    ParameterCount { expected: usize, found: usize },
    #[error("model simulation diverged at sample {sample}")]
    Divergence { sample: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}
