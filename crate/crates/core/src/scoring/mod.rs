//! Point-wise anomaly scores from cross-scale reconstruction error, full
//! series assembly, and peaks-over-threshold calibration.

mod pot;

pub use pot::{pot_threshold, quantile, GpdFit, PotConfig, PotFit};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::model::{Forward, MultiScaleBundle};
use crate::numerics::linear_interpolate;
use crate::training::{channel_split, make_windows, Detector};
use crate::{Error, Result};

const CHUNK: usize = 8;

/// How per-channel scores merge into one score per timestep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl Aggregation {
    pub fn apply(self, per_channel: &[Vec<f64>]) -> Vec<f64> {
        let n = per_channel.first().map_or(0, Vec::len);
        (0..n)
            .map(|t| {
                let column = per_channel.iter().map(|c| c[t]);
                match self {
                    Aggregation::Mean => column.sum::<f64>() / per_channel.len() as f64,
                    Aggregation::Max => column.fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect()
    }
}

/// Scores, threshold and predicted labels for one series.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSeries {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub labels: Vec<u8>,
    pub per_channel: Vec<Vec<f64>>,
}

impl ScoredSeries {
    pub fn new(per_channel: Vec<Vec<f64>>, aggregation: Aggregation, threshold: f64) -> Self {
        let scores = aggregation.apply(&per_channel);
        let labels = apply_threshold(&scores, threshold);
        Self {
            scores,
            threshold,
            labels,
            per_channel,
        }
    }
}

/// Squared error of every reconstructed scale, resampled to the finest
/// length and averaged over the `m` scales.
pub fn window_score(bundle: &MultiScaleBundle, recon: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = bundle.m();
    if recon.len() != m || m == 0 {
        return Err(Error::Shape(format!("{} reconstructions for {m} scales", recon.len())));
    }
    let target = bundle.original().len();
    let mut out = vec![0.0; target];
    for (i, r) in recon.iter().enumerate() {
        let x = bundle.scale(i + 1);
        if r.len() != x.len() {
            return Err(Error::Shape(format!("scale {}: {} values for length {}", i + 1, r.len(), x.len())));
        }
        let sq: Vec<f64> = x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).collect();
        for (o, v) in out.iter_mut().zip(linear_interpolate(&sq, target)?) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= m as f64);
    Ok(out)
}

impl Detector {
    /// Inference-mode scores of already-normalized windows, in input order.
    pub fn score_windows(&self, windows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let g = self.config.model.use_context.then(|| self.context.concat());
        let chunks = windows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut fwd = Forward::new(&self.model, g.as_ref(), None)?;
                chunk
                    .iter()
                    .map(|w| {
                        let out = fwd.window(w)?;
                        let recon: Vec<Vec<f64>> =
                            out.reconstructions.iter().map(|&v| fwd.value(v).data().to_vec()).collect();
                        window_score(&out.bundle, &recon)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Scores for every point of a normalized series. Windows are laid at
    /// stride `window` with a final window flush with the end; where that
    /// tail window overlaps its predecessor, its scores win.
    pub fn score_series(&self, series: &[f64]) -> Result<Vec<f64>> {
        let w = self.config.model.window;
        let offsets = make_windows(series.len(), w, w, true)?;
        let windows: Vec<&[f64]> = offsets.iter().map(|&o| &series[o..o + w]).collect();
        let mut out = vec![0.0; series.len()];
        for (&o, s) in offsets.iter().zip(self.score_windows(&windows)?) {
            out[o..o + w].copy_from_slice(&s);
        }
        Ok(out)
    }

    /// Per-channel scores of a raw dataset, normalized with the training
    /// statistics.
    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        channel_split(data, &self.stats)?
            .iter()
            .map(|c| self.score_series(c))
            .collect()
    }

    /// Aggregated scores of the validation portion of the training data,
    /// the population the threshold is calibrated on. Falls back to the whole
    /// training series when nothing was held out.
    pub fn calibration_scores(&self, train: &Dataset, aggregation: Aggregation) -> Result<Vec<f64>> {
        let start = self.config.validation_start(train.len());
        let part = if start < train.len() {
            train.slice(start, train.len())?
        } else {
            log::warn!("no validation portion; calibrating the threshold on the training series");
            train.clone()
        };
        Ok(aggregation.apply(&self.score_dataset(&part)?))
    }
}

/// `1` where the score is strictly above `threshold`.
pub fn apply_threshold(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}
