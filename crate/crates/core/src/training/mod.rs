//! Windowing, channel-independent normalization, the reconstruction
//! objective and the optimization loop.

mod detector;
mod fit;
mod optim;

pub use detector::Detector;
pub use fit::{fit, EpochRecord, FitOutcome, StepRecord, TrainLog, Trainer, WindowRef};
pub use optim::{clip_global_norm, Adam, AdamConfig};

use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, Dataset};
use crate::model::{ModelConfig, MultiScaleBundle};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Offset between consecutive training windows; `None` means half a window.
    pub train_stride: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps, whatever the epoch count.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Trailing fraction of the training series held out for validation.
    pub validation_fraction: f64,
    pub grad_clip: f64,
    /// Sum squared errors per scale instead of averaging them.
    pub sum_of_squares: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train_stride: None,
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 10,
            max_steps: None,
            seed: 0,
            validation_fraction: 0.2,
            grad_clip: 5.0,
            sum_of_squares: false,
        }
    }
}

impl TrainConfig {
    pub fn stride(&self) -> usize {
        self.train_stride.unwrap_or((self.model.window / 2).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.train_stride == Some(0) {
            return Err(Error::Config("train_stride must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} must lie in [0, 1)",
                self.validation_fraction
            )));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!("grad_clip {} must be positive", self.grad_clip)));
        }
        Ok(())
    }

    /// Row where the validation portion of a `len`-row series begins.
    pub fn validation_start(&self, len: usize) -> usize {
        len - (len as f64 * self.validation_fraction).floor() as usize
    }
}

/// Window offsets `0, s, 2s, …` with `offset + w ≤ T`, plus a final window at
/// `T − w` when `cover_tail` is set and the grid leaves points uncovered.
pub fn make_windows(len: usize, window: usize, stride: usize, cover_tail: bool) -> Result<Vec<usize>> {
    if window == 0 || stride == 0 {
        return Err(Error::Config(format!("window {window} and stride {stride} must be positive")));
    }
    if window > len {
        return Err(Error::Data(format!("series of length {len} is shorter than the window {window}")));
    }
    let mut offsets: Vec<usize> = (0..=len - window).step_by(stride).collect();
    let last = *offsets.last().expect("window ≤ len gives offset 0");
    if cover_tail && last + window < len {
        offsets.push(len - window);
    }
    Ok(offsets)
}

/// Every channel z-scored with its own statistics, in channel order.
pub fn channel_split(data: &Dataset, stats: &[ChannelStats]) -> Result<Vec<Vec<f64>>> {
    if stats.len() != data.channel_count() {
        return Err(Error::Data(format!(
            "{} channel statistics for {} channels",
            stats.len(),
            data.channel_count()
        )));
    }
    Ok(data.channels().iter().zip(stats).map(|(c, s)| s.normalize(c)).collect())
}

/// Reconstruction objective: per-scale mean squared error summed over the
/// reconstructed scales `1 … m`, or per-scale sums with `sum_of_squares`.
pub fn loss(bundle: &MultiScaleBundle, recon: &[Vec<f64>], sum_of_squares: bool) -> Result<f64> {
    if recon.len() != bundle.m() {
        return Err(Error::Shape(format!("{} reconstructions for {} scales", recon.len(), bundle.m())));
    }
    let mut total = 0.0;
    for (i, r) in recon.iter().enumerate() {
        let target = bundle.scale(i + 1);
        if r.len() != target.len() {
            return Err(Error::Shape(format!("scale {}: {} values for length {}", i + 1, r.len(), target.len())));
        }
        let sq: f64 = r.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        total += if sum_of_squares { sq } else { sq / r.len() as f64 };
    }
    Ok(total)
}
