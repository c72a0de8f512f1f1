use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::optim::{clip_global_norm, Adam, AdamConfig};
use super::{channel_split, make_windows, Detector, TrainConfig};
use crate::crosswindow::GlobalContext;
use crate::data::{train_stats, Dataset};
use crate::model::{Forward, Model};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Windows recorded on one tape. Fixed, so that results do not depend on
/// how many threads process the chunks.
const CHUNK: usize = 8;

/// Where a training window came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowRef {
    pub channel: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// Seconds since training started. Kept out of the deterministic log.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// `epoch<TAB>step<TAB>loss`, one line per optimizer step.
    pub fn write_steps(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch\tstep\tloss")?;
        for r in &self.steps {
            writeln!(w, "{}\t{}\t{:?}", r.epoch, r.step, r.loss)?;
        }
        Ok(())
    }

    /// `epoch<TAB>train_loss<TAB>val_loss`; `-` when nothing was held out.
    pub fn write_epochs(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch\ttrain_loss\tval_loss")?;
        for r in &self.epochs {
            match r.val_loss {
                Some(v) => writeln!(w, "{}\t{:?}\t{v:?}", r.epoch, r.train_loss)?,
                None => writeln!(w, "{}\t{:?}\t-", r.epoch, r.train_loss)?,
            }
        }
        Ok(())
    }

    /// `epoch<TAB>step<TAB>wall_seconds`.
    pub fn write_timing(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch\tstep\twall_seconds")?;
        for r in &self.steps {
            writeln!(w, "{}\t{}\t{:.3}", r.epoch, r.step, r.wall_seconds)?;
        }
        Ok(())
    }
}

pub struct FitOutcome {
    pub detector: Detector,
    pub log: TrainLog,
}

/// Model, context and optimizer state advanced one batch at a time.
pub struct Trainer {
    pub model: Model,
    pub context: GlobalContext,
    config: TrainConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    steps: usize,
}

struct ChunkResult {
    loss: f64,
    grads: Vec<Tensor>,
    reps: Vec<Tensor>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model.clone(), config.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        let m = &config.model;
        let context = GlobalContext::random(m.prototypes, m.query_len, m.d_model, m.decay, &mut rng)?;
        let adam = Adam::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            &model.params,
        );
        Ok(Self {
            model,
            context,
            config,
            adam,
            rng,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    fn context_tensor(&self) -> Option<Tensor> {
        self.config.model.use_context.then(|| self.context.concat())
    }

    fn run_chunk(&self, windows: &[&[f64]], seed: u64, scale: f64, g: Option<&Tensor>) -> Result<ChunkResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fwd = Forward::new(&self.model, g, Some(&mut rng))?;
        let mut total = None;
        let mut reps = Vec::new();
        for w in windows {
            let out = fwd.window(w)?;
            let l = fwd.window_loss(&out, self.config.sum_of_squares)?;
            total = Some(match total {
                Some(acc) => fwd.tape.add(acc, l)?,
                None => l,
            });
            reps.extend(out.representation);
        }
        let total = total.ok_or_else(|| Error::Data("empty chunk".into()))?;
        let loss = fwd.tape.scale(total, scale);
        let value = fwd.value(loss).data()[0];
        let mut grads = fwd.tape.backward(loss)?;
        let grads = self.model.params.collect_grads(&fwd.bound, &mut grads);
        let reps = reps.into_iter().map(|r| fwd.value(r).clone()).collect();
        Ok(ChunkResult { loss: value, grads, reps })
    }

    /// One optimizer step on the mean window loss of `windows`, followed by
    /// one context update per window in batch order. Returns the loss.
    pub fn step(&mut self, windows: &[&[f64]]) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let g = self.context_tensor();
        let scale = 1.0 / windows.len() as f64;
        let chunks: Vec<(&[&[f64]], u64)> = windows.chunks(CHUNK).map(|c| (c, self.rng.random())).collect();
        let results = chunks
            .par_iter()
            .map(|&(c, seed)| self.run_chunk(c, seed, scale, g.as_ref()))
            .collect::<Result<Vec<_>>>()?;

        let mut loss = 0.0;
        let mut grads: Option<Vec<Tensor>> = None;
        let mut reps = Vec::new();
        for r in results {
            loss += r.loss;
            reps.extend(r.reps);
            match &mut grads {
                Some(acc) => acc.iter_mut().zip(&r.grads).for_each(|(a, b)| a.add_assign(b)),
                None => grads = Some(r.grads),
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: 0,
                step: self.steps,
                dump: self.dump(loss),
            });
        }
        let mut grads = grads.expect("at least one chunk");
        clip_global_norm(&mut grads, self.config.grad_clip);
        self.adam.step(&mut self.model.params, &grads);
        for rep in &reps {
            self.context.update(rep)?;
        }
        self.steps += 1;
        Ok(loss)
    }

    /// Mean window loss in inference mode (no dropout, no Gumbel noise).
    pub fn eval_loss(&self, windows: &[&[f64]]) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::Data("no windows to evaluate".into()));
        }
        let g = self.context_tensor();
        let sums = windows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut fwd = Forward::new(&self.model, g.as_ref(), None)?;
                let mut sum = 0.0;
                for w in chunk {
                    let out = fwd.window(w)?;
                    let l = fwd.window_loss(&out, self.config.sum_of_squares)?;
                    sum += fwd.value(l).data()[0];
                }
                Ok(sum)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(sums.iter().sum::<f64>() / windows.len() as f64)
    }

    fn dump(&self, loss: f64) -> String {
        let mut out = format!("loss = {loss:?}\nparameter norms:\n");
        for (name, t) in self.model.params.iter() {
            let norm = t.squared_norm().sqrt();
            let flag = if norm.is_finite() { "" } else { "  <-- non-finite" };
            out.push_str(&format!("  {name}: {norm:.6e}{flag}\n"));
        }
        out
    }
}

/// Trains on the leading part of `train`, holding out the trailing
/// `validation_fraction` for per-epoch validation loss. Statistics for the
/// z-score come from the leading part only.
pub fn fit(config: &TrainConfig, train: &Dataset) -> Result<FitOutcome> {
    config.validate()?;
    let window = config.model.window;
    let len = train.len();
    let split = config.validation_start(len);
    if split < window {
        return Err(Error::Data(format!(
            "training portion has {split} rows, fewer than the window {window}"
        )));
    }
    let held_out = len - split;
    if held_out > 0 && held_out < window {
        return Err(Error::Data(format!(
            "validation portion has {held_out} rows, fewer than the window {window}; \
             lengthen the series or lower validation_fraction"
        )));
    }
    let stats = train_stats(&train.slice(0, split)?)?;
    let series = channel_split(train, &stats)?;

    let mut refs = Vec::new();
    let mut val_refs = Vec::new();
    for c in 0..series.len() {
        for offset in make_windows(split, window, config.stride(), true)? {
            refs.push(WindowRef { channel: c, offset });
        }
        if held_out > 0 {
            for offset in make_windows(held_out, window, window, true)? {
                val_refs.push(WindowRef { channel: c, offset: split + offset });
            }
        }
    }
    let view = |r: &WindowRef| &series[r.channel][r.offset..r.offset + window];
    let val_windows: Vec<&[f64]> = val_refs.iter().map(view).collect();

    let mut trainer = Trainer::new(config.clone())?;
    let mut log = TrainLog::default();
    let start = Instant::now();
    let budget = config.max_steps.unwrap_or(usize::MAX);
    log::info!(
        "training on {} windows ({} validation), {} parameters",
        refs.len(),
        val_refs.len(),
        trainer.model.params.count()
    );

    'epochs: for epoch in 0..config.epochs {
        let mut order = refs.clone();
        trainer.shuffle(&mut order);
        let mut epoch_losses = Vec::new();
        for batch in order.chunks(config.batch_size) {
            if trainer.steps() >= budget {
                break;
            }
            let windows: Vec<&[f64]> = batch.iter().map(view).collect();
            let step = trainer.steps();
            let loss = trainer.step(&windows).map_err(|e| match e {
                Error::NonFiniteLoss { step, dump, .. } => Error::NonFiniteLoss {
                    epoch,
                    step,
                    dump: format!("{dump}batch windows (channel, offset): {:?}\n", batch.iter().map(|r| (r.channel, r.offset)).collect::<Vec<_>>()),
                },
                other => other,
            })?;
            epoch_losses.push(loss);
            log.steps.push(StepRecord {
                epoch,
                step,
                loss,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
        }
        if epoch_losses.is_empty() {
            break 'epochs;
        }
        let train_loss = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
        let val_loss = if val_windows.is_empty() {
            None
        } else {
            Some(trainer.eval_loss(&val_windows)?)
        };
        log::info!("epoch {epoch}: train {train_loss:.6} validation {val_loss:?}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
    }

    Ok(FitOutcome {
        detector: Detector {
            model: trainer.model,
            context: trainer.context,
            stats,
            config: config.clone(),
        },
        log,
    })
}
