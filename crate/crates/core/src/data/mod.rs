//! Datasets, CSV ingestion, normalization statistics, and the synthetic
//! anomaly generator.

mod io;
mod synth;

pub use io::{load_csv, save_csv};
pub use synth::{synth_generate, AnomalyKind, Injection, Sinusoid, SynthBenchmark, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which side of the train/test split a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A `T × C` series stored channel by channel, with optional 0/1 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    channels: Vec<Vec<f64>>,
    labels: Option<Vec<u8>>,
    split: Split,
}

impl Dataset {
    pub fn new(names: Vec<String>, channels: Vec<Vec<f64>>, labels: Option<Vec<u8>>, split: Split) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Data("dataset has no channels".into()));
        }
        if names.len() != channels.len() {
            return Err(Error::Data(format!("{} names for {} channels", names.len(), channels.len())));
        }
        let t = channels[0].len();
        if let Some((i, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != t) {
            return Err(Error::Data(format!("channel {} has {} rows, expected {t}", names[i], c.len())));
        }
        for (name, c) in names.iter().zip(&channels) {
            if let Some(row) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite value in channel {name} at row {row}")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != t {
                return Err(Error::Data(format!("{} labels for {t} rows", l.len())));
            }
            if let Some(row) = l.iter().position(|&v| v > 1) {
                return Err(Error::Data(format!("label {} at row {row} is not 0 or 1", l[row])));
            }
        }
        Ok(Self {
            names,
            channels,
            labels,
            split,
        })
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of channels `C`.
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Rows `[start, end)` of every channel, labels included.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Data(format!("row range {start}..{end} outside 0..{}", self.len())));
        }
        Self::new(
            self.names.clone(),
            self.channels.iter().map(|c| c[start..end].to_vec()).collect(),
            self.labels.as_ref().map(|l| l[start..end].to_vec()),
            self.split,
        )
    }
}

/// Population mean and standard deviation of one channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

pub const MIN_STD: f64 = 1e-8;

impl ChannelStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt().max(MIN_STD),
        }
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v * self.std + self.mean).collect()
    }
}

/// Per-channel statistics of a training set; zero-variance channels get a
/// clamped std and a warning.
pub fn train_stats(train: &Dataset) -> Result<Vec<ChannelStats>> {
    if train.len() < 2 {
        return Err(Error::Data(format!("need at least 2 rows for statistics, got {}", train.len())));
    }
    Ok(train
        .channels
        .iter()
        .zip(&train.names)
        .map(|(c, name)| {
            let s = ChannelStats::of(c);
            if s.std == MIN_STD {
                log::warn!("channel {name} has zero variance; std clamped to {MIN_STD}");
            }
            s
        })
        .collect())
}
