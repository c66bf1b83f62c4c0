//! Shared fixtures for the benchmarks: a short plant record and a structure
//! sized like the typical polynomial candidate.

use hwid_core::estimation::Structure;
use hwid_core::hwmodel::Family;
use hwid_core::pipeline::{simulate_record, DataConfig};
use hwid_core::timeseries::TimeSeries;

pub const INPUTS: [&str; 2] = ["i_d", "i_q"];

/// Grid-forming plant record of `seconds` length.
pub fn plant_record(seconds: f64) -> TimeSeries {
    let config = DataConfig {
        duration: seconds,
        preroll: 0.5,
        ..DataConfig::default()
    };
    simulate_record(&config, 3).expect("default plant simulates")
}

pub fn poly_structure() -> Structure {
    Structure {
        family: Family::Polynomial,
        degree: 3,
        nb: 2,
        nf: 2,
        nk: 1,
    }
}
