//! Run configuration: one TOML file with a section per stage.
//!
//! ```toml
//! seed = 0
//!
//! [data]
//! train = "train.csv"        # relative paths resolve against this file
//! test = "test.csv"
//! label_column = "label"
//!
//! [synth]                    # used by `xscale synth`
//! train_length = 16384
//! test_length = 8192
//! noise = 0.05
//! components = [{ period = 101.0, amplitude = 1.0, phase = 0.0 }]
//! injections = [{ kind = "shapelet", start = 900, length = 48, magnitude = 1.0 }]
//!
//! [model]                    # architecture
//! window = 256
//! kernels = [32, 16, 8, 4, 2]
//!
//! [train]
//! learning_rate = 1e-4
//! batch_size = 128
//! epochs = 10
//!
//! [scoring]
//! aggregation = "mean"       # or "max"
//! plot = true
//!
//! [pot]
//! init_quantile = 0.98
//! risk = 1e-3
//!
//! [metrics]
//! vus_max_buffer = 32
//! range_buffer = 16
//! ```
//!
//! Every key is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xscale_core::data::{Injection, Sinusoid, SynthBenchmark};
use xscale_core::metrics::MetricSettings;
use xscale_core::model::ModelConfig;
use xscale_core::scoring::{Aggregation, PotConfig};
use xscale_core::training::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds both the synthetic generator and training.
    pub seed: u64,
    pub data: DataSection,
    pub synth: SynthSection,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub scoring: ScoringSection,
    pub pot: PotConfig,
    pub metrics: MetricSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub label_column: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            label_column: "label".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub train_length: usize,
    pub test_length: usize,
    pub noise: f64,
    pub components: Vec<Sinusoid>,
    pub injections: Vec<Injection>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let b = SynthBenchmark::default();
        Self {
            train_length: b.train_length,
            test_length: b.test_length,
            noise: b.noise,
            components: b.components,
            injections: b.injections,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub train_stride: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_steps: Option<usize>,
    pub validation_fraction: f64,
    pub grad_clip: f64,
    pub sum_of_squares: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            train_stride: t.train_stride,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            max_steps: t.max_steps,
            validation_fraction: t.validation_fraction,
            grad_clip: t.grad_clip,
            sum_of_squares: t.sum_of_squares,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub aggregation: Aggregation,
    /// Write `scores.png` next to the score files.
    pub plot: bool,
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Mean,
            plot: true,
        }
    }
}

impl RunConfig {
    /// Parses `path` (or takes every default when `None`) and resolves data
    /// paths against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.train, &mut cfg.data.test].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn benchmark(&self) -> SynthBenchmark {
        SynthBenchmark {
            train_length: self.synth.train_length,
            test_length: self.synth.test_length,
            components: self.synth.components.clone(),
            noise: self.synth.noise,
            injections: self.synth.injections.clone(),
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            model: self.model.clone(),
            train_stride: t.train_stride,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            max_steps: t.max_steps,
            seed: self.seed,
            validation_fraction: t.validation_fraction,
            grad_clip: t.grad_clip,
            sum_of_squares: t.sum_of_squares,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn data_path(&self, which: &str) -> Result<&Path, CliError> {
        let p = match which {
            "train" => &self.data.train,
            _ => &self.data.test,
        };
        p.as_deref()
            .ok_or_else(|| CliError::Validation(format!("config needs data.{which}")))
    }
}
