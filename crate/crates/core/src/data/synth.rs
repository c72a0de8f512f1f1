//! Seeded sinusoid-plus-noise series with the five injected anomaly
//! patterns: global and contextual points, shapelets, seasonal changes and
//! trends.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub period: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    /// Adds `magnitude × global std` to each point.
    PointGlobal,
    /// Sets each point to `local mean ± magnitude × local std` over a window
    /// of two dominant periods, clipped to the global range of the clean
    /// series. The sign points away from the original value.
    PointContextual,
    /// Swaps the dominant sinusoid for a square wave of the same period and
    /// phase with amplitude `magnitude × A`.
    Shapelet,
    /// Multiplies every component's frequency by `magnitude` inside the
    /// segment.
    Seasonal,
    /// Adds a ramp reaching `magnitude` at the last point of the segment.
    Trend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: AnomalyKind,
    pub start: usize,
    pub length: usize,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub length: usize,
    pub components: Vec<Sinusoid>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.05
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::Config(format!("synthetic length {} must be at least 2", self.length)));
        }
        if self.components.is_empty() {
            return Err(Error::Config("synthetic signal needs at least one sinusoid".into()));
        }
        for c in &self.components {
            if !(c.period > 0.0 && c.period.is_finite()) || !c.amplitude.is_finite() || !c.phase.is_finite() {
                return Err(Error::Config(format!("invalid sinusoid {c:?}")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise {} must be finite and nonnegative", self.noise)));
        }
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(self.injections.len());
        for inj in &self.injections {
            let end = inj.start.saturating_add(inj.length);
            if inj.length == 0 || end > self.length {
                return Err(Error::Config(format!(
                    "injection {:?} at [{}, {end}) outside 0..{}",
                    inj.kind, inj.start, self.length
                )));
            }
            if !inj.magnitude.is_finite() || (inj.kind == AnomalyKind::Seasonal && inj.magnitude <= 0.0) {
                return Err(Error::Config(format!("injection {:?} has invalid magnitude {}", inj.kind, inj.magnitude)));
            }
            if let Some(&(s, e)) = spans.iter().find(|&&(s, e)| inj.start < e && s < end) {
                return Err(Error::Config(format!(
                    "injection at [{}, {end}) overlaps injection at [{s}, {e})",
                    inj.start
                )));
            }
            spans.push((inj.start, end));
        }
        Ok(())
    }

    fn dominant(&self) -> &Sinusoid {
        self.components
            .iter()
            .reduce(|a, b| if b.amplitude.abs() > a.amplitude.abs() { b } else { a })
            .expect("validated non-empty")
    }
}

/// A clean training series and an injected test series from one recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthBenchmark {
    pub train_length: usize,
    pub test_length: usize,
    pub components: Vec<Sinusoid>,
    pub noise: f64,
    /// Injected into the test series only.
    pub injections: Vec<Injection>,
    pub seed: u64,
}

impl Default for SynthBenchmark {
    /// Two sinusoids with coprime periods, so training windows at any stride
    /// see many phase combinations. The test series carries two of each
    /// anomaly pattern.
    fn default() -> Self {
        use AnomalyKind::*;
        let layout = [
            (PointGlobal, 1, 4.0),
            (PointContextual, 1, 3.0),
            (Shapelet, 48, 1.0),
            (Seasonal, 96, 2.0),
            (Trend, 64, 1.5),
        ];
        let injections = (0..10)
            .map(|i| {
                let (kind, length, magnitude) = layout[i % 5];
                Injection {
                    kind,
                    start: 500 + 760 * i + 37 * (i % 3),
                    length,
                    magnitude,
                }
            })
            .collect();
        Self {
            train_length: 16384,
            test_length: 8192,
            components: vec![
                Sinusoid { period: 101.0, amplitude: 1.0, phase: 0.0 },
                Sinusoid { period: 29.0, amplitude: 0.5, phase: 0.7 },
            ],
            noise: default_noise(),
            injections,
            seed: 0,
        }
    }
}

impl SynthBenchmark {
    /// Training spec (seed `seed`, no injections) and test spec (seed
    /// `seed + 1`).
    pub fn specs(&self) -> (SynthSpec, SynthSpec) {
        let train = SynthSpec {
            length: self.train_length,
            components: self.components.clone(),
            noise: self.noise,
            injections: Vec::new(),
            seed: self.seed,
        };
        let test = SynthSpec {
            length: self.test_length,
            injections: self.injections.clone(),
            seed: self.seed.wrapping_add(1),
            ..train.clone()
        };
        (train, test)
    }

    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = self.specs();
        let test = synth_generate(&test)?;
        let train = synth_generate(&train)?;
        let train = Dataset::new(train.names().to_vec(), train.channels().to_vec(), None, Split::Train)?;
        Ok((train, test))
    }
}

fn angle(c: &Sinusoid, t: f64) -> f64 {
    2.0 * std::f64::consts::PI * t / c.period + c.phase
}

/// One labelled channel named `value`.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let clean: Vec<f64> = (0..n)
        .map(|t| spec.components.iter().map(|c| c.amplitude * angle(c, t as f64).sin()).sum::<f64>() + noise[t])
        .collect();

    let mean = clean.iter().sum::<f64>() / n as f64;
    let global_std = (clean.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let lo = clean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dominant = spec.dominant();

    let mut x = clean.clone();
    let mut labels = vec![0u8; n];
    for inj in &spec.injections {
        let span = inj.start..inj.start + inj.length;
        for t in span.clone() {
            labels[t] = 1;
            let tf = t as f64;
            x[t] = match inj.kind {
                AnomalyKind::PointGlobal => clean[t] + inj.magnitude * global_std,
                AnomalyKind::PointContextual => {
                    let half = dominant.period as usize;
                    let a = t.saturating_sub(half);
                    let b = (t + half + 1).min(n);
                    let local = &clean[a..b];
                    let m = local.iter().sum::<f64>() / local.len() as f64;
                    let s = (local.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / local.len() as f64).sqrt();
                    let sign = if clean[t] >= m { -1.0 } else { 1.0 };
                    (m + sign * inj.magnitude * s).clamp(lo, hi)
                }
                AnomalyKind::Shapelet => {
                    let th = angle(dominant, tf);
                    let square = if th.sin() >= 0.0 { 1.0 } else { -1.0 };
                    clean[t] - dominant.amplitude * th.sin() + inj.magnitude * dominant.amplitude * square
                }
                AnomalyKind::Seasonal => {
                    let warped = inj.start as f64 + (tf - inj.start as f64) * inj.magnitude;
                    spec.components.iter().map(|c| c.amplitude * angle(c, warped).sin()).sum::<f64>() + noise[t]
                }
                AnomalyKind::Trend => clean[t] + inj.magnitude * (t - inj.start + 1) as f64 / inj.length as f64,
            };
        }
    }
    Dataset::new(vec!["value".into()], vec![x], Some(labels), Split::Test)
}
