use std::path::Path;

use super::TrainConfig;
use crate::crosswindow::GlobalContext;
use crate::data::ChannelStats;
use crate::model::checkpoint::Checkpoint;
use crate::model::Model;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// A trained model with its global context and normalization statistics.
#[derive(Clone, Debug)]
pub struct Detector {
    pub model: Model,
    pub context: GlobalContext,
    pub stats: Vec<ChannelStats>,
    pub config: TrainConfig,
}

impl Detector {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, Tensor)> =
            self.model.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        for (i, p) in self.context.prototypes().iter().enumerate() {
            tensors.push((format!("context.{i}"), p.clone()));
        }
        tensors.push(("stats.mean".into(), Tensor::new(vec![self.stats.len()], self.stats.iter().map(|s| s.mean).collect()).expect("one per channel")));
        tensors.push(("stats.std".into(), Tensor::new(vec![self.stats.len()], self.stats.iter().map(|s| s.std).collect()).expect("one per channel")));
        Checkpoint {
            config_json: serde_json::to_string_pretty(&self.config).expect("config serializes"),
            tensors,
        }
    }

    /// Rebuilds the detector; every stored tensor must match the layout
    /// implied by the stored configuration, with nothing missing or extra.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: TrainConfig =
            serde_json::from_str(&ck.config_json).map_err(|e| Error::Config(format!("checkpoint configuration: {e}")))?;
        let mut model = Model::new(config.model.clone(), config.seed)?;
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            let t = ck.get(&name).ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))?;
            model.params.set(id, t.clone())?;
        }
        let m = &config.model;
        let prototypes = (0..m.prototypes)
            .map(|i| {
                let name = format!("context.{i}");
                let t = ck.get(&name).ok_or_else(|| Error::Config(format!("checkpoint lacks {name}")))?;
                if t.shape() != [m.query_len, m.d_model] {
                    return Err(Error::Shape(format!("{name} has shape {:?}", t.shape())));
                }
                Ok(t.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let context = GlobalContext::new(prototypes, m.decay)?;
        let mean = ck.get("stats.mean").ok_or_else(|| Error::Config("checkpoint lacks stats.mean".into()))?;
        let std = ck.get("stats.std").ok_or_else(|| Error::Config("checkpoint lacks stats.std".into()))?;
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::Shape("channel statistics disagree in length".into()));
        }
        let stats = mean
            .data()
            .iter()
            .zip(std.data())
            .map(|(&mean, &std)| ChannelStats { mean, std })
            .collect();
        let expected = model.params.len() + m.prototypes + 2;
        if ck.tensors.len() != expected {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors, configuration implies {expected}",
                ck.tensors.len()
            )));
        }
        Ok(Self {
            model,
            context,
            stats,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        Self::from_checkpoint(&ck).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}
