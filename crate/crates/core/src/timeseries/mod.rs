//! Uniformly sampled multichannel signal records.
//!
//! [`TimeSeries`] is the value every stage of the pipeline consumes and
//! produces: plant simulations emit one, excitation generators emit one, the
//! identified models read their inputs from one. Frame transforms live in
//! [`frame`], CSV persistence in [`csvio`].

pub mod csvio;
pub mod frame;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvio::{read_csv, read_csv_from, write_csv, write_csv_to, CsvError};
pub use frame::{abc_to_dq, angle_from_frequency, dq_to_abc, park, inverse_park, FrameConvention};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("sample time must be positive and finite, got {0}")]
    InvalidSampleTime(f64),
    #[error("channel `{channel}` has {found} samples, expected {expected}")]
    LengthMismatch {
        channel: String,
        expected: usize,
        found: usize,
    },
    #[error("channel `{channel}` has a non-finite sample at index {index}")]
    NonFinite { channel: String, index: usize },
    #[error("duplicate channel name `{0}`")]
    DuplicateName(String),
    #[error("empty channel name")]
    EmptyName,
    #[error("missing channel `{0}`")]
    MissingChannel(String),
    #[error("sample times differ: {0} vs {1}")]
    SampleTimeMismatch(f64, f64),
}

/// A named, uniformly sampled, finite-valued multichannel record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries", into = "RawSeries")]
pub struct TimeSeries {
    sample_time: f64,
    names: Vec<String>,
    data: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawSeries {
    sample_time: f64,
    channels: Vec<(String, Vec<f64>)>,
}

impl TryFrom<RawSeries> for TimeSeries {
    type Error = SeriesError;
    fn try_from(raw: RawSeries) -> Result<Self, Self::Error> {
        TimeSeries::new(raw.sample_time, raw.channels)
    }
}

impl From<TimeSeries> for RawSeries {
    fn from(ts: TimeSeries) -> Self {
        RawSeries {
            sample_time: ts.sample_time,
            channels: ts.names.into_iter().zip(ts.data).collect(),
        }
    }
}

impl TimeSeries {
    pub fn new<S: Into<String>>(
        sample_time: f64,
        channels: Vec<(S, Vec<f64>)>,
    ) -> Result<Self, SeriesError> {
        if !(sample_time.is_finite() && sample_time > 0.0) {
            return Err(SeriesError::InvalidSampleTime(sample_time));
        }
        let mut ts = TimeSeries {
            sample_time,
            names: Vec::with_capacity(channels.len()),
            data: Vec::with_capacity(channels.len()),
        };
        for (name, samples) in channels {
            ts.push_channel(name.into(), samples)?;
        }
        Ok(ts)
    }

    fn push_channel(&mut self, name: String, samples: Vec<f64>) -> Result<(), SeriesError> {
        if name.is_empty() {
            return Err(SeriesError::EmptyName);
        }
        if self.names.iter().any(|n| *n == name) {
            return Err(SeriesError::DuplicateName(name));
        }
        if let Some(first) = self.data.first() {
            if first.len() != samples.len() {
                return Err(SeriesError::LengthMismatch {
                    channel: name,
                    expected: first.len(),
                    found: samples.len(),
                });
            }
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite { channel: name, index });
        }
        self.names.push(name);
        self.data.push(samples);
        Ok(())
    }

    /// Returns a copy with one more channel appended.
    pub fn with_channel(mut self, name: impl Into<String>, samples: Vec<f64>) -> Result<Self, SeriesError> {
        self.push_channel(name.into(), samples)?;
        Ok(self)
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.sample_time
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64], SeriesError> {
        self.channel(name)
            .ok_or_else(|| SeriesError::MissingChannel(name.to_string()))
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.data.iter().map(Vec::as_slice))
    }

    /// Time stamp of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.sample_time
    }

    /// Keeps only the named channels, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<TimeSeries, SeriesError> {
        let channels = names
            .iter()
            .map(|n| Ok((n.to_string(), self.require(n)?.to_vec())))
            .collect::<Result<Vec<_>, SeriesError>>()?;
        TimeSeries::new(self.sample_time, channels)
    }

    /// Merges the channels of `other` into `self`. Both must share length and
    /// sample time.
    pub fn merge(mut self, other: &TimeSeries) -> Result<TimeSeries, SeriesError> {
        check_same_rate(self.sample_time, other.sample_time)?;
        for (name, samples) in other.channels() {
            self.push_channel(name.to_string(), samples.to_vec())?;
        }
        Ok(self)
    }

    pub fn into_channels(self) -> Vec<(String, Vec<f64>)> {
        self.names.into_iter().zip(self.data).collect()
    }
}

pub(crate) fn check_same_rate(a: f64, b: f64) -> Result<(), SeriesError> {
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(SeriesError::SampleTimeMismatch(a, b));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_channels() {
        let err = TimeSeries::new(1e-3, vec![("a", vec![1.0, 2.0]), ("b", vec![1.0])]).unwrap_err();
        assert!(matches!(err, SeriesError::LengthMismatch { .. }));
    }

    #[test]
    fn rejects_non_finite_and_bad_names() {
        assert!(matches!(
            TimeSeries::new(1e-3, vec![("a", vec![1.0, f64::NAN])]),
            Err(SeriesError::NonFinite { index: 1, .. })
        ));
        assert_eq!(
            TimeSeries::new(1e-3, vec![("a", vec![1.0]), ("a", vec![2.0])]).unwrap_err(),
            SeriesError::DuplicateName("a".into())
        );
        assert_eq!(
            TimeSeries::new(1e-3, vec![("", vec![1.0])]).unwrap_err(),
            SeriesError::EmptyName
        );
        assert!(TimeSeries::new(0.0, Vec::<(String, Vec<f64>)>::new()).is_err());
    }

    #[test]
    fn select_and_merge() {
        let ts = TimeSeries::new(0.5, vec![("x", vec![1.0, 2.0]), ("y", vec![3.0, 4.0])]).unwrap();
        let y = ts.select(&["y"]).unwrap();
        assert_eq!(y.names(), ["y"]);
        assert_eq!(y.duration(), 1.0);
        let z = TimeSeries::new(0.5, vec![("z", vec![0.0, 0.0])]).unwrap();
        let merged = y.merge(&z).unwrap();
        assert_eq!(merged.names(), ["y", "z"]);
        assert!(ts.select(&["w"]).is_err());
    }
}
