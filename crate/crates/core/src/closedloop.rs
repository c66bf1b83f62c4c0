//! Identified model as an online component: dq↔abc adaptation around the
//! MIMO runner and a PCC scene that hosts either the black box or the
//! surrogate.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwmodel::{HwMimo, MimoRunner};
use crate::plant::{self, DriveSchedule, PlantError, PlantParams, PlantScenario, Rk4, DIVERGENCE_LIMIT};
use crate::timeseries::{park, inverse_park, SeriesError, TimeSeries};

pub const CURRENT_INPUTS: [&str; 2] = ["i_d", "i_q"];
pub const VOLTAGE_OUTPUTS: [&str; 3] = ["u_d", "u_q", "f"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedLoopError {
    #[error("model lacks channel `{0}`")]
    MissingChannel(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("surrogate diverged at t = {time:.4} s")]
    Divergence { time: f64 },
    #[error("{slot} run failed: {source}")]
    Run {
        slot: Slot,
        #[source]
        source: Box<ClosedLoopError>,
    },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    BlackBox,
    Surrogate,
}

impl std::fmt::Display for Slot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Slot::BlackBox => "black-box",
            Slot::Surrogate => "surrogate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptedOutput {
    pub u_abc: [f64; 3],
    pub u_d: f64,
    pub u_q: f64,
    pub f: f64,
    pub i_d: f64,
    pub i_q: f64,
    /// Angle used for both transforms at this step.
    pub theta: f64,
}

/// A MIMO model with current inputs `i_d, i_q` and outputs `u_d, u_q, f`,
/// wrapped so that it exchanges abc quantities.
#[derive(Debug, Clone)]
pub struct AdaptedModel<'a> {
    runner: MimoRunner<'a>,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    current_slots: [usize; 2],
    voltage_slots: [usize; 3],
    theta: f64,
    f_prev: f64,
}

impl<'a> AdaptedModel<'a> {
    /// `theta` and `f` describe the frame before the first step.
    pub fn new(model: &'a HwMimo, theta: f64, f: f64) -> Result<Self, ClosedLoopError> {
        let ins = model.inputs();
        let outs = model.outputs();
        let mut current_slots = [0; 2];
        for (slot, name) in current_slots.iter_mut().zip(CURRENT_INPUTS) {
            *slot = ins.iter().position(|n| *n == name).ok_or_else(|| ClosedLoopError::MissingChannel(name.into()))?;
        }
        if ins.len() != 2 {
            return Err(ClosedLoopError::InvalidScene(format!("expected current inputs only, got {ins:?}")));
        }
        let mut voltage_slots = [0; 3];
        for (slot, name) in voltage_slots.iter_mut().zip(VOLTAGE_OUTPUTS) {
            *slot = outs.iter().position(|n| *n == name).ok_or_else(|| ClosedLoopError::MissingChannel(name.into()))?;
        }
        Ok(AdaptedModel {
            runner: model.runner(),
            inputs: vec![0.0; ins.len()],
            outputs: vec![0.0; outs.len()],
            current_slots,
            voltage_slots,
            theta,
            f_prev: f,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Advances the angle with the previous frequency output, then steps.
    pub fn step(&mut self, i_abc: [f64; 3], dt: f64) -> AdaptedOutput {
        let theta = self.theta + 2.0 * PI * self.f_prev * dt;
        self.step_with_angle(i_abc, theta)
    }

    /// Steps in an externally supplied frame.
    pub fn step_with_angle(&mut self, i_abc: [f64; 3], theta: f64) -> AdaptedOutput {
        let (i_d, i_q) = park(i_abc[0], i_abc[1], i_abc[2], theta);
        self.inputs[self.current_slots[0]] = i_d;
        self.inputs[self.current_slots[1]] = i_q;
        self.runner.step(&self.inputs, &mut self.outputs);
        let [d, q, f] = self.voltage_slots.map(|i| self.outputs[i]);
        let (a, b, c) = inverse_park(d, q, theta);
        self.theta = theta;
        self.f_prev = f;
        AdaptedOutput {
            u_abc: [a, b, c],
            u_d: d,
            u_q: q,
            f,
            i_d,
            i_q,
            theta,
        }
    }
}

fn finite_bounded(o: &AdaptedOutput, f0: f64) -> bool {
    [o.u_d, o.u_q].iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT)
        && o.f.is_finite()
        && (o.f - f0).abs() <= DIVERGENCE_LIMIT
}

/// Reconstructs abc currents from `data` (channels `i_a..i_c`) and drives the
/// adapted model in its own frame. The starting angle comes from the first
/// voltage sample.
pub fn replay(model: &HwMimo, data: &TimeSeries) -> Result<TimeSeries, ClosedLoopError> {
    let get = |n: &str| data.channel(n).ok_or_else(|| ClosedLoopError::MissingChannel(n.into()));
    let (ia, ib, ic) = (get("i_a")?, get("i_b")?, get("i_c")?);
    let (ua, ub, uc) = (get("u_a")?, get("u_b")?, get("u_c")?);
    let (ud, uq, f) = (get("u_d")?, get("u_q")?, get("f")?);
    if data.is_empty() {
        return Err(ClosedLoopError::InvalidScene("empty dataset".into()));
    }
    let dt = data.sample_time();
    let (d0, q0) = park(ua[0], ub[0], uc[0], 0.0);
    let theta0 = q0.atan2(d0) - uq[0].atan2(ud[0]);
    let mut adapted = AdaptedModel::new(model, theta0 - 2.0 * PI * f[0] * dt, f[0])?;
    let f0 = f[0];
    let mut out: [Vec<f64>; 5] = Default::default();
    for k in 0..data.len() {
        let o = adapted.step([ia[k], ib[k], ic[k]], dt);
        if !finite_bounded(&o, f0) {
            return Err(ClosedLoopError::Divergence { time: data.time(k) });
        }
        for (ch, v) in out.iter_mut().zip([o.i_d, o.i_q, o.u_d, o.u_q, o.f]) {
            ch.push(v);
        }
    }
    let [a, b, c, d, e] = out;
    Ok(TimeSeries::new(dt, vec![("i_d", a), ("i_q", b), ("u_d", c), ("u_q", d), ("f", e)])?)
}

/// Free run with zero current at the terminals.
pub fn zero_current_run(model: &HwMimo, samples: usize, dt: f64, f0: f64) -> Result<TimeSeries, ClosedLoopError> {
    let mut adapted = AdaptedModel::new(model, 0.0, f0)?;
    let mut out: [Vec<f64>; 3] = Default::default();
    for k in 0..samples {
        let o = adapted.step([0.0; 3], dt);
        if !finite_bounded(&o, f0) {
            return Err(ClosedLoopError::Divergence { time: k as f64 * dt });
        }
        for (ch, v) in out.iter_mut().zip([o.u_d, o.u_q, o.f]) {
            ch.push(v);
        }
    }
    let [a, b, c] = out;
    Ok(TimeSeries::new(dt, vec![("u_d", a), ("u_q", b), ("f", c)])?)
}

/// Device under test sits at the PCC of a specified-voltage source behind
/// the network line, with the network's shunt load. The schedule carries
/// `u_ref`/`f_ref` (source) and optional `p_load`/`q_load` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridScene {
    pub plant: PlantParams,
    pub schedule: TimeSeries,
    pub solver_step: f64,
    pub preroll: f64,
}

impl MicrogridScene {
    pub fn new(plant: PlantParams, schedule: TimeSeries) -> Self {
        let defaults = PlantScenario::new(plant.clone(), schedule.clone());
        MicrogridScene {
            plant,
            schedule,
            solver_step: defaults.solver_step,
            preroll: defaults.preroll,
        }
    }

    pub fn duration(&self) -> f64 {
        self.schedule.duration()
    }

    fn validate(&self) -> Result<(), ClosedLoopError> {
        if !matches!(self.plant, PlantParams::Gfm(_)) {
            return Err(ClosedLoopError::InvalidScene(
                "the scene hosts voltage-forming devices only".into(),
            ));
        }
        if !self.plant.network().source {
            return Err(ClosedLoopError::InvalidScene("the PCC needs a specified-voltage source".into()));
        }
        if self.schedule.is_empty() || !(self.preroll >= 0.0) {
            return Err(ClosedLoopError::InvalidScene("empty schedule or negative preroll".into()));
        }
        Ok(())
    }

    fn scenario(&self) -> PlantScenario {
        PlantScenario {
            solver_step: self.solver_step,
            preroll: self.preroll,
            ..PlantScenario::new(self.plant.clone(), self.schedule.clone())
        }
    }
}

/// `u_ref` staircase: each level held for `hold` seconds.
pub fn voltage_staircase(levels: &[f64], hold: f64, sample_time: f64) -> Result<TimeSeries, SeriesError> {
    let per = (hold / sample_time).round().max(1.0) as usize;
    let u: Vec<f64> = levels.iter().flat_map(|v| std::iter::repeat_n(*v, per)).collect();
    TimeSeries::new(sample_time, vec![("u_ref", u)])
}

#[derive(Debug, Clone, Copy)]
pub enum Device<'a> {
    BlackBox,
    Surrogate(&'a HwMimo),
}

const SCENE_CHANNELS: [&str; 5] = ["i_d", "i_q", "u_d", "u_q", "f"];

/// Runs one scene; the result holds `i_d, i_q, u_d, u_q, f` in the device's
/// own frame.
pub fn run_scene(scene: &MicrogridScene, device: Device<'_>) -> Result<TimeSeries, ClosedLoopError> {
    scene.validate()?;
    match device {
        Device::BlackBox => Ok(plant::simulate(&scene.scenario())?.select(&SCENE_CHANNELS)?),
        Device::Surrogate(model) => run_surrogate(scene, model),
    }
}

fn run_surrogate(scene: &MicrogridScene, model: &HwMimo) -> Result<TimeSeries, ClosedLoopError> {
    let sc = scene.scenario();
    let m = sc.substeps()?;
    let h = sc.solver_step;
    let dt = scene.schedule.sample_time();
    let net = scene.plant.network().clone();
    let f0 = scene.plant.nominal_frequency();
    let wb = 2.0 * PI * f0;
    let j = Complex64::i();
    let schedule = DriveSchedule::new(&scene.schedule, &net, (0.0, 0.0));

    // aligned with the network frame at t = 0
    let mut adapted = AdaptedModel::new(model, -wb * dt, f0)?;
    // line current (re, im) and source angle
    let mut x = [0.0; 3];
    let mut rk = Rk4::new(3);
    let mut u_net = Complex64::new(0.0, 0.0);
    let mut primed = false;

    let pre = (scene.preroll / dt).round() as usize;
    let n = scene.schedule.len();
    let mut out: [Vec<f64>; 5] = Default::default();
    for k in 0..pre + n {
        let rec = k.checked_sub(pre);
        let d = schedule.at(rec.unwrap_or(0));
        let t = k as f64 * dt;
        let i_g = Complex64::new(x[0], x[1]);
        let load = Complex64::new(d.load_g, -d.load_b);
        let i_net = i_g + if primed { load * u_net } else { Complex64::new(0.0, 0.0) };

        let ang = wb * t;
        let (a, b, c) = inverse_park(i_net.re, i_net.im, ang);
        let o = adapted.step([a, b, c], dt);
        if !finite_bounded(&o, f0) {
            return Err(ClosedLoopError::Divergence {
                time: rec.map_or(t - scene.preroll, |r| r as f64 * dt),
            });
        }
        let (ud, uq) = park(o.u_abc[0], o.u_abc[1], o.u_abc[2], ang);
        u_net = Complex64::new(ud, uq);
        primed = true;
        if rec.is_some() {
            for (ch, v) in out.iter_mut().zip([o.i_d, o.i_q, o.u_d, o.u_q, o.f]) {
                ch.push(v);
            }
        }

        let u_hold = u_net;
        for _ in 0..m {
            rk.step(&mut x, 0.0, h, &mut |_, s: &[f64], ds: &mut [f64]| {
                let i = Complex64::new(s[0], s[1]);
                let u_s = Complex64::from_polar(d.source_voltage, s[2]);
                let di = wb / net.l_line * (u_hold - u_s - net.r_line * i - j * net.l_line * i);
                ds[0] = di.re;
                ds[1] = di.im;
                ds[2] = 2.0 * PI * (d.source_frequency - f0);
            });
        }
        if x.iter().any(|v| !v.is_finite()) || x[0].hypot(x[1]) > DIVERGENCE_LIMIT {
            return Err(ClosedLoopError::Divergence { time: t + dt - scene.preroll });
        }
    }
    let [a, b, c, d, e] = out;
    Ok(TimeSeries::new(dt, vec![("i_d", a), ("i_q", b), ("u_d", c), ("u_q", d), ("f", e)])?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub channel: String,
    pub max_abs: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub deviations: Vec<Deviation>,
    /// Both runs stayed bounded over the full horizon.
    pub stable: bool,
    pub horizon: f64,
}

impl ComparisonSummary {
    pub fn deviation(&self, channel: &str) -> Option<&Deviation> {
        self.deviations.iter().find(|d| d.channel == channel)
    }

    /// Largest deviation over `u_d` and `u_q`.
    pub fn max_voltage_deviation(&self) -> f64 {
        ["u_d", "u_q"]
            .iter()
            .filter_map(|c| self.deviation(c))
            .map(|d| d.max_abs)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `<ch>_plant` and `<ch>_model` for each compared channel.
    pub series: TimeSeries,
    pub summary: ComparisonSummary,
}

/// Runs the black box in `reference` and `device` in `other`; the scenes
/// must agree on horizon and sampling.
pub fn run_comparison(
    reference: &MicrogridScene,
    other: &MicrogridScene,
    device: Device<'_>,
) -> Result<Comparison, ClosedLoopError> {
    if reference.schedule.len() != other.schedule.len()
        || (reference.schedule.sample_time() - other.schedule.sample_time()).abs() > 1e-15
    {
        return Err(ClosedLoopError::InvalidScene(format!(
            "horizons differ: {} s vs {} s",
            reference.duration(),
            other.duration()
        )));
    }
    let slot = |s: Slot| move |e: ClosedLoopError| ClosedLoopError::Run { slot: s, source: Box::new(e) };
    let (a, b) = rayon::join(
        || run_scene(reference, Device::BlackBox).map_err(slot(Slot::BlackBox)),
        || {
            let s = match device {
                Device::BlackBox => Slot::BlackBox,
                Device::Surrogate(_) => Slot::Surrogate,
            };
            run_scene(other, device).map_err(slot(s))
        },
    );
    let (a, b) = (a?, b?);
    let mut channels = Vec::new();
    let mut deviations = Vec::new();
    for ch in VOLTAGE_OUTPUTS {
        let (p, m) = (a.require(ch)?, b.require(ch)?);
        let diff: Vec<f64> = p.iter().zip(m).map(|(x, y)| x - y).collect();
        deviations.push(Deviation {
            channel: ch.to_string(),
            max_abs: diff.iter().fold(0.0, |acc, v| acc.max(v.abs())),
            rms: (diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64).sqrt(),
        });
        channels.push((format!("{ch}_plant"), p.to_vec()));
        channels.push((format!("{ch}_model"), m.to_vec()));
    }
    Ok(Comparison {
        series: TimeSeries::new(a.sample_time(), channels)?,
        summary: ComparisonSummary {
            deviations,
            stable: true,
            horizon: reference.duration(),
        },
    })
}

#[cfg(test)]
mod tests;
