//! Multilevel amplitude-modulated pseudo-random step signals (APRBS).
//!
//! A binary sequence only visits two amplitudes and cannot reveal static
//! nonlinearities, so every segment draws its level uniformly from `levels`
//! equispaced values and its hold time uniformly from `hold_range`.
//!
//! Level draws are i.i.d. except for a coverage rule: a level that has not
//! been emitted for `2·levels` segments is queued and emitted as soon as
//! possible. This guarantees every window of `3·levels` segments visits every
//! level while leaving the repetition rate close to `1/levels`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{SeriesError, TimeSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitationError {
    #[error("invalid excitation spec: {0}")]
    InvalidSpec(String),
    #[error("excitation specs disagree on {0}")]
    Mismatch(&'static str),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcitationSpec {
    pub duration: f64,
    pub sample_time: f64,
    pub levels: usize,
    pub bounds: (f64, f64),
    pub hold_range: (f64, f64),
    pub settle_time: f64,
    pub seed: u64,
    /// Value held during `settle_time`; midpoint of `bounds` when absent.
    pub nominal: Option<f64>,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        ExcitationSpec {
            duration: 30.0,
            sample_time: 1e-3,
            levels: 7,
            bounds: (0.9, 1.1),
            hold_range: (0.2, 1.0),
            settle_time: 1.0,
            seed: 0,
            nominal: None,
        }
    }
}

impl ExcitationSpec {
    pub fn new(bounds: (f64, f64), seed: u64) -> Self {
        ExcitationSpec {
            bounds,
            seed,
            ..Default::default()
        }
    }

    pub fn nominal_value(&self) -> f64 {
        self.nominal
            .unwrap_or(0.5 * (self.bounds.0 + self.bounds.1))
    }

    /// The equispaced amplitudes a segment may take.
    pub fn level_values(&self) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        let step = (hi - lo) / (self.levels - 1) as f64;
        (0..self.levels)
            .map(|i| if i + 1 == self.levels { hi } else { lo + step * i as f64 })
            .collect()
    }

    pub fn sample_count(&self) -> usize {
        (self.duration / self.sample_time).round() as usize
    }

    pub fn validate(&self) -> Result<(), ExcitationError> {
        let bad = |m: String| Err(ExcitationError::InvalidSpec(m));
        let (lo, hi) = self.bounds;
        let (hmin, hmax) = self.hold_range;
        if !(self.sample_time.is_finite() && self.sample_time > 0.0) {
            return bad(format!("sample_time must be positive, got {}", self.sample_time));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("bounds must satisfy min < max, got ({lo}, {hi})"));
        }
        if self.levels < 3 {
            return bad(format!("at least 3 levels required, got {}", self.levels));
        }
        if !(hmin >= 10.0 * self.sample_time * (1.0 - 1e-12)) || !(hmax >= hmin) {
            return bad(format!(
                "hold_range ({hmin}, {hmax}) must satisfy 10·sample_time ≤ min ≤ max"
            ));
        }
        if !(self.settle_time >= 0.0) {
            return bad(format!("settle_time must be non-negative, got {}", self.settle_time));
        }
        if !(self.duration >= self.settle_time + hmin) {
            return bad(format!(
                "duration {} shorter than settle_time + min hold ({})",
                self.duration,
                self.settle_time + hmin
            ));
        }
        if let Some(v) = self.nominal {
            if !v.is_finite() {
                return bad("nominal value must be finite".into());
            }
        }
        Ok(())
    }
}

/// Segment boundaries and level indices, before expansion into samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub settle_samples: usize,
    /// (first sample, sample count, level index)
    pub segments: Vec<(usize, usize, usize)>,
}

pub fn plan_segments(spec: &ExcitationSpec) -> Result<SegmentPlan, ExcitationError> {
    spec.validate()?;
    let n = spec.sample_count();
    let settle = ((spec.settle_time / spec.sample_time).round() as usize).min(n);
    let hold_min = (spec.hold_range.0 / spec.sample_time).round().max(1.0) as usize;
    let hold_max = ((spec.hold_range.1 / spec.sample_time).round() as usize).max(hold_min);
    let levels = spec.levels;
    let stale_after = 2 * levels;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_seen: Vec<Option<usize>> = vec![None; levels];
    let mut queue: Vec<usize> = Vec::new();
    let mut segments = Vec::new();
    let mut start = settle;
    let mut idx = 0usize;
    while start < n {
        let hold = rng.random_range(hold_min..=hold_max);
        let draw = rng.random_range(0..levels);
        for (lvl, seen) in last_seen.iter().enumerate() {
            let age = match seen {
                Some(s) => idx - s,
                None => idx + 1,
            };
            if age > stale_after && !queue.contains(&lvl) {
                queue.push(lvl);
            }
        }
        let level = if queue.is_empty() { draw } else { queue.remove(0) };
        last_seen[level] = Some(idx);
        let len = hold.min(n - start);
        segments.push((start, len, level));
        start += len;
        idx += 1;
    }
    Ok(SegmentPlan {
        settle_samples: settle,
        segments,
    })
}

/// Raw samples of an APRBS signal.
pub fn aprbs_samples(spec: &ExcitationSpec) -> Result<Vec<f64>, ExcitationError> {
    let plan = plan_segments(spec)?;
    let values = spec.level_values();
    let mut out = vec![spec.nominal_value(); plan.settle_samples];
    out.reserve(spec.sample_count().saturating_sub(plan.settle_samples));
    for (_, len, level) in &plan.segments {
        out.extend(std::iter::repeat_n(values[*level], *len));
    }
    Ok(out)
}

/// One-channel APRBS series; the channel is named `aprbs`.
pub fn generate_aprbs(spec: &ExcitationSpec) -> Result<TimeSeries, ExcitationError> {
    Ok(TimeSeries::new(
        spec.sample_time,
        vec![("aprbs", aprbs_samples(spec)?)],
    )?)
}

/// Named multichannel excitation. All specs must share duration and sample time.
pub fn build_signals(specs: &[(&str, &ExcitationSpec)]) -> Result<TimeSeries, ExcitationError> {
    let Some((_, first)) = specs.first() else {
        return Err(ExcitationError::InvalidSpec("no channels requested".into()));
    };
    for (_, s) in specs {
        if (s.sample_time - first.sample_time).abs() > 1e-12 * first.sample_time {
            return Err(ExcitationError::Mismatch("sample_time"));
        }
        if s.sample_count() != first.sample_count() {
            return Err(ExcitationError::Mismatch("duration"));
        }
    }
    let channels = specs
        .iter()
        .map(|(name, s)| Ok((name.to_string(), aprbs_samples(s)?)))
        .collect::<Result<Vec<_>, ExcitationError>>()?;
    Ok(TimeSeries::new(first.sample_time, channels)?)
}

/// `u_ref` (pu), `f_ref` (Hz) and optionally `p_load` (pu).
pub fn build_scenario_signals(
    voltage: &ExcitationSpec,
    frequency: &ExcitationSpec,
    power: Option<&ExcitationSpec>,
) -> Result<TimeSeries, ExcitationError> {
    let mut specs = vec![("u_ref", voltage), ("f_ref", frequency)];
    if let Some(p) = power {
        specs.push(("p_load", p));
    }
    build_signals(&specs)
}
