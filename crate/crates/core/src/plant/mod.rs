//! Reference black-box inverter simulators.
//!
//! Average-value models in per unit, written as complex phasors in a frame
//! rotating at the nominal grid frequency. Each device controls in its own
//! rotating frame (droop angle for GFM, PLL angle for GFL); measured PCC
//! quantities are reported in that frame. Only the terminal [`TimeSeries`]
//! leaves this module.

mod gfl;
mod gfm;
pub mod ode;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{angle_from_frequency, dq_to_abc, SeriesError, TimeSeries};

pub use gfl::GflParams;
pub use gfm::GfmParams;
pub use ode::{integrate, Rk4};

/// Divergence threshold on any state magnitude, pu.
pub const DIVERGENCE_LIMIT: f64 = 100.0;

/// Terminal channels every simulator emits, in order.
pub const OUTPUT_CHANNELS: [&str; 11] = [
    "i_d", "i_q", "u_d", "u_q", "f", "i_a", "i_b", "i_c", "u_a", "u_b", "u_c",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("simulation diverged at t = {time:.4} s")]
    Divergence { time: f64 },
    #[error("PLL failed to lock: |u_q| = {u_q:.4} pu at t = {time:.3} s")]
    LockLoss { time: f64, u_q: f64 },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// PCC network seen by the device: an optional specified-voltage source
/// behind a series line, plus a shunt load admittance `G - jB`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Network {
    pub source: bool,
    /// Source magnitude (pu) and frequency (Hz) when no `u_ref`/`f_ref`
    /// excitation channel is present.
    pub source_voltage: f64,
    pub source_frequency: f64,
    pub r_line: f64,
    pub l_line: f64,
    /// Load conductance, overridden by a `p_load` channel (power at 1 pu).
    pub load_g: f64,
    /// Inductive load susceptance, overridden by a `q_load` channel.
    pub load_b: f64,
}

impl Default for Network {
    fn default() -> Self {
        Network {
            source: true,
            source_voltage: 1.0,
            source_frequency: 50.0,
            r_line: 0.03,
            l_line: 0.3,
            load_g: 0.0,
            load_b: 0.0,
        }
    }
}

impl Network {
    pub fn islanded(load_g: f64, load_b: f64) -> Self {
        Network {
            source: false,
            load_g,
            load_b,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), PlantError> {
        if self.source && !(self.l_line > 0.0) {
            return Err(PlantError::InvalidParams("line inductance must be positive".into()));
        }
        if self.r_line < 0.0 || self.load_g < 0.0 {
            return Err(PlantError::InvalidParams("negative line resistance or load".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantParams {
    Gfm(GfmParams),
    Gfl(GflParams),
}

impl PlantParams {
    pub fn network(&self) -> &Network {
        match self {
            PlantParams::Gfm(p) => &p.network,
            PlantParams::Gfl(p) => &p.network,
        }
    }

    pub fn network_mut(&mut self) -> &mut Network {
        match self {
            PlantParams::Gfm(p) => &mut p.network,
            PlantParams::Gfl(p) => &mut p.network,
        }
    }

    pub fn nominal_frequency(&self) -> f64 {
        match self {
            PlantParams::Gfm(p) => p.f0,
            PlantParams::Gfl(p) => p.f0,
        }
    }
}

/// Additive white measurement noise on `u_d`, `u_q` and `f`, scaled to each
/// channel's standard deviation over the record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoise {
    pub relative_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantScenario {
    pub params: PlantParams,
    /// Setpoint and network modulation channels, zero-order held.
    pub excitation: TimeSeries,
    pub solver_step: f64,
    /// Time simulated with the first excitation sample before recording.
    pub preroll: f64,
    pub noise: Option<MeasurementNoise>,
}

impl PlantScenario {
    pub fn new(params: PlantParams, excitation: TimeSeries) -> Self {
        PlantScenario {
            params,
            excitation,
            solver_step: 5e-5,
            preroll: 2.0,
            noise: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.excitation.duration()
    }

    pub(crate) fn substeps(&self) -> Result<usize, PlantError> {
        let dt = self.excitation.sample_time();
        let h = self.solver_step;
        if !(h > 0.0 && h <= dt * (1.0 + 1e-12)) {
            return Err(PlantError::InvalidScenario(format!(
                "solver step {h} must be positive and not exceed the sample time {dt}"
            )));
        }
        let m = (dt / h).round();
        if ((dt / h) - m).abs() > 1e-6 {
            return Err(PlantError::InvalidScenario(format!(
                "sample time {dt} is not an integer multiple of solver step {h}"
            )));
        }
        if self.excitation.is_empty() {
            return Err(PlantError::InvalidScenario("empty excitation".into()));
        }
        Ok(m as usize)
    }
}

/// Per-sample external inputs shared by both device models.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Drive {
    pub source_voltage: f64,
    pub source_frequency: f64,
    pub load_g: f64,
    pub load_b: f64,
    pub i_d_ref: f64,
    pub i_q_ref: f64,
}

pub(crate) struct DriveSchedule<'a> {
    u: Option<&'a [f64]>,
    f: Option<&'a [f64]>,
    p: Option<&'a [f64]>,
    q: Option<&'a [f64]>,
    id: Option<&'a [f64]>,
    iq: Option<&'a [f64]>,
    base: Drive,
}

impl<'a> DriveSchedule<'a> {
    pub fn new(excitation: &'a TimeSeries, network: &Network, i_ref: (f64, f64)) -> Self {
        DriveSchedule {
            u: excitation.channel("u_ref"),
            f: excitation.channel("f_ref"),
            p: excitation.channel("p_load"),
            q: excitation.channel("q_load"),
            id: excitation.channel("i_d_ref"),
            iq: excitation.channel("i_q_ref"),
            base: Drive {
                source_voltage: network.source_voltage,
                source_frequency: network.source_frequency,
                load_g: network.load_g,
                load_b: network.load_b,
                i_d_ref: i_ref.0,
                i_q_ref: i_ref.1,
            },
        }
    }

    pub fn at(&self, k: usize) -> Drive {
        let pick = |c: Option<&[f64]>, d: f64| c.map_or(d, |c| c[k]);
        Drive {
            source_voltage: pick(self.u, self.base.source_voltage),
            source_frequency: pick(self.f, self.base.source_frequency),
            load_g: pick(self.p, self.base.load_g),
            load_b: pick(self.q, self.base.load_b),
            i_d_ref: pick(self.id, self.base.i_d_ref),
            i_q_ref: pick(self.iq, self.base.i_q_ref),
        }
    }
}

/// Terminal quantities at one sample, device frame.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Terminal {
    pub i: Complex64,
    pub u: Complex64,
    pub f: f64,
}

pub(crate) fn c(x: &[f64], i: usize) -> Complex64 {
    Complex64::new(x[i], x[i + 1])
}

pub(crate) fn put(dx: &mut [f64], i: usize, v: Complex64) {
    dx[i] = v.re;
    dx[i + 1] = v.im;
}

pub(crate) fn check_bounded(x: &[f64], time: f64, skip: &[usize]) -> Result<(), PlantError> {
    for (i, v) in x.iter().enumerate() {
        if skip.contains(&i) {
            if !v.is_finite() {
                return Err(PlantError::Divergence { time });
            }
            continue;
        }
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(PlantError::Divergence { time });
        }
    }
    Ok(())
}

pub fn simulate(scenario: &PlantScenario) -> Result<TimeSeries, PlantError> {
    match scenario.params {
        PlantParams::Gfm(_) => simulate_gfm(scenario),
        PlantParams::Gfl(_) => simulate_gfl(scenario),
    }
}

pub fn simulate_gfm(scenario: &PlantScenario) -> Result<TimeSeries, PlantError> {
    let PlantParams::Gfm(params) = &scenario.params else {
        return Err(PlantError::InvalidScenario("expected GFM parameters".into()));
    };
    let (terminal, theta0) = gfm::run(params, scenario)?;
    assemble(scenario, &terminal, theta0)
}

pub fn simulate_gfl(scenario: &PlantScenario) -> Result<TimeSeries, PlantError> {
    let PlantParams::Gfl(params) = &scenario.params else {
        return Err(PlantError::InvalidScenario("expected GFL parameters".into()));
    };
    let (terminal, theta0) = gfl::run(params, scenario)?;
    assemble(scenario, &terminal, theta0)
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn assemble(scenario: &PlantScenario, terminal: &[Terminal], theta0: f64) -> Result<TimeSeries, PlantError> {
    let dt = scenario.excitation.sample_time();
    let i_d: Vec<f64> = terminal.iter().map(|t| t.i.re).collect();
    let i_q: Vec<f64> = terminal.iter().map(|t| t.i.im).collect();
    let mut u_d: Vec<f64> = terminal.iter().map(|t| t.u.re).collect();
    let mut u_q: Vec<f64> = terminal.iter().map(|t| t.u.im).collect();
    let mut f: Vec<f64> = terminal.iter().map(|t| t.f).collect();

    if let Some(noise) = scenario.noise {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for ch in [&mut u_d, &mut u_q, &mut f] {
            let sigma = noise.relative_std * std_dev(ch);
            for v in ch.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * z;
            }
        }
    }

    // Waveforms are rebuilt with the angle integrated from the reported
    // frequency, so an abc→dq pass with that angle recovers the dq channels.
    let theta = angle_from_frequency(&f, dt, theta0)?;
    let [i_a, i_b, i_c] = dq_to_abc(&i_d, &i_q, &theta)?;
    let [u_a, u_b, u_c] = dq_to_abc(&u_d, &u_q, &theta)?;
    let channels = vec![i_d, i_q, u_d, u_q, f, i_a, i_b, i_c, u_a, u_b, u_c];
    Ok(TimeSeries::new(
        dt,
        OUTPUT_CHANNELS.iter().map(|s| s.to_string()).zip(channels).collect(),
    )?)
}

pub(crate) fn two_pi() -> f64 {
    2.0 * PI
}
