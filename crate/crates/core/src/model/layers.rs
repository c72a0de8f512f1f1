//! Parameter layouts of the building blocks and their forward passes.

use rand::Rng;

use super::params::{BoundParams, ParamId, ParamStore};
use crate::numerics::{AttentionWeights, Tape, Tensor, Var};
use crate::Result;

/// `x · W + b` with `W: in × out`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            weight: store.add_uniform(format!("{name}.weight"), &[fan_in, fan_out], fan_in, rng),
            bias: store.add_uniform(format!("{name}.bias"), &[fan_out], fan_in, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p.var(self.weight))?;
        Ok(tape.add_row(y, p.var(self.bias))?)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[width], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[width])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        Ok(tape.layer_norm(x, p.var(self.gamma), p.var(self.beta))?)
    }
}

/// Query, key, value and output projections, `d × d`, bias-free.
#[derive(Clone, Copy, Debug)]
pub struct AttentionBlock {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
}

impl AttentionBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Self {
        let mut w = |part: &str| store.add_uniform(format!("{name}.{part}"), &[d, d], d, rng);
        Self {
            query: w("query"),
            key: w("key"),
            value: w("value"),
            output: w("output"),
        }
    }

    pub fn bind(&self, p: &BoundParams) -> AttentionWeights {
        AttentionWeights {
            query: p.var(self.query),
            key: p.var(self.key),
            value: p.var(self.value),
            output: p.var(self.output),
        }
    }
}

/// Two-layer position-wise MLP with a GELU in between.
#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.inner"), d, hidden, rng),
            outer: Linear::new(store, &format!("{name}.outer"), hidden, d, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        let h = self.inner.forward(tape, p, x)?;
        let h = tape.gelu(h);
        self.outer.forward(tape, p, h)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderLayer {
    pub attention: AttentionBlock,
    pub norm_attention: Norm,
    pub feedforward: FeedForward,
    pub norm_feedforward: Norm,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            attention: AttentionBlock::new(store, &format!("{name}.attention"), d, rng),
            norm_attention: Norm::new(store, &format!("{name}.norm_attention"), d),
            feedforward: FeedForward::new(store, &format!("{name}.feedforward"), d, hidden, rng),
            norm_feedforward: Norm::new(store, &format!("{name}.norm_feedforward"), d),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderLayer {
    pub self_attention: AttentionBlock,
    pub norm_self: Norm,
    pub context_attention: AttentionBlock,
    pub norm_context: Norm,
    pub feedforward: FeedForward,
    pub norm_feedforward: Norm,
}

impl DecoderLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            self_attention: AttentionBlock::new(store, &format!("{name}.self_attention"), d, rng),
            norm_self: Norm::new(store, &format!("{name}.norm_self"), d),
            context_attention: AttentionBlock::new(store, &format!("{name}.context_attention"), d, rng),
            norm_context: Norm::new(store, &format!("{name}.norm_context"), d),
            feedforward: FeedForward::new(store, &format!("{name}.feedforward"), d, hidden, rng),
            norm_feedforward: Norm::new(store, &format!("{name}.norm_feedforward"), d),
        }
    }
}

/// Fixed sinusoidal encoding: `sin(p / 10000^(2i/d))` at even columns `2i`,
/// the matching cosine at odd columns.
pub fn sinusoidal_encoding(positions: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; positions * d];
    for p in 0..positions {
        for i in (0..d).step_by(2) {
            let angle = p as f64 / 10000f64.powf(i as f64 / d as f64);
            data[p * d + i] = angle.sin();
            if i + 1 < d {
                data[p * d + i + 1] = angle.cos();
            }
        }
    }
    Tensor::from_rows(positions, d, data).expect("positions and d are positive")
}
