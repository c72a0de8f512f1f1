//! The cross-scale reconstruction network and its forward pass.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bundle::{generate_multiscale, MultiScaleBundle};
use super::config::ModelConfig;
use super::layers::{sinusoidal_encoding, AttentionBlock, DecoderLayer, EncoderLayer, Linear};
use super::masks::{build_cross_scale_mask, build_scale_independent_mask};
use super::params::{BoundParams, ParamStore};
use crate::crosswindow::{extract_subseries_rep, period_extract, sample_gumbel, QueryLibrary, Routed};
use crate::numerics::{attend_projected, interpolation_matrix, masked_attention, MaskMatrix, ProjectedMemory, Tape, Tensor, Var};
use crate::{Error, Result};

/// Patch counts per scale for a fixed patch length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchPlan {
    pub patch_len: usize,
    /// `P_0 … P_m`.
    pub counts: Vec<usize>,
}

impl PatchPlan {
    pub fn new(lengths: &[usize], patch_len: usize) -> Result<Self> {
        if patch_len == 0 || lengths.iter().any(|t| t % patch_len != 0) {
            return Err(Error::Config(format!(
                "scale lengths {lengths:?} must all be divisible by patch_len {patch_len}"
            )));
        }
        let counts: Vec<usize> = lengths.iter().map(|t| t / patch_len).collect();
        if counts.windows(2).any(|w| w[0] >= w[1]) || counts.contains(&0) {
            return Err(Error::Config(format!("patch counts {counts:?} must be positive and increasing")));
        }
        Ok(Self { patch_len, counts })
    }

    /// Number of coarse (encoder) scales `m`.
    pub fn m(&self) -> usize {
        self.counts.len() - 1
    }

    /// `P_0 … P_{m-1}`.
    pub fn encoder_counts(&self) -> &[usize] {
        &self.counts[..self.m()]
    }

    /// `P_1 … P_m`.
    pub fn decoder_counts(&self) -> &[usize] {
        &self.counts[1..]
    }

    pub fn encoder_total(&self) -> usize {
        self.encoder_counts().iter().sum()
    }

    pub fn decoder_total(&self) -> usize {
        self.decoder_counts().iter().sum()
    }

    fn check(&self, bundle: &MultiScaleBundle) -> Result<()> {
        let expected: Vec<usize> = self.counts.iter().map(|c| c * self.patch_len).collect();
        if bundle.lengths() != expected {
            return Err(Error::Shape(format!(
                "bundle lengths {:?} do not match patch plan {:?}",
                bundle.lengths(),
                expected
            )));
        }
        Ok(())
    }
}

/// Parameter layout plus the constant tensors derived from the configuration.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    pub plan: PatchPlan,
    pub embeddings: Vec<Linear>,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub projections: Vec<Linear>,
    pub library: QueryLibrary,
    pub representation: AttentionBlock,
    pub encoder_mask: MaskMatrix,
    pub decoder_mask: MaskMatrix,
    positional: Vec<Arc<Tensor>>,
    interpolations: Vec<Arc<Tensor>>,
}

/// Network layout together with its parameter values.
#[derive(Clone, Debug)]
pub struct Model {
    pub network: Network,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model with seeded uniform `±√(1/fan_in)` initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let d = config.d_model;
        let p = config.patch_len;
        let hidden = config.ff_mult * d;
        let m = config.scales();
        let plan = PatchPlan::new(&config.scale_lengths(), p)?;

        let embeddings = (0..m)
            .map(|i| Linear::new(&mut store, &format!("embed.{i}"), p, d, &mut rng))
            .collect();
        let encoder = (0..config.encoder_layers)
            .map(|l| EncoderLayer::new(&mut store, &format!("encoder.{l}"), d, hidden, &mut rng))
            .collect();
        let decoder = (0..config.decoder_layers)
            .map(|l| DecoderLayer::new(&mut store, &format!("decoder.{l}"), d, hidden, &mut rng))
            .collect();
        let projections = (1..=m)
            .map(|i| Linear::new(&mut store, &format!("project.{i}"), d, p, &mut rng))
            .collect();
        let library = QueryLibrary::new(
            &mut store,
            config.window,
            config.router_hidden,
            config.queries,
            config.query_len,
            d,
            config.temperature,
            config.top_k,
            &mut rng,
        );
        let representation = AttentionBlock::new(&mut store, "library.representation", d, &mut rng);

        let encoder_mask = build_scale_independent_mask(plan.encoder_counts())?;
        let decoder_mask = if config.self_reconstruction {
            build_scale_independent_mask(plan.decoder_counts())?
        } else {
            build_cross_scale_mask(plan.decoder_counts())?
        };
        let positional = plan
            .encoder_counts()
            .iter()
            .map(|&c| Arc::new(sinusoidal_encoding(c, d)))
            .collect();
        let interpolations = (0..m)
            .map(|i| interpolation_matrix(plan.counts[i], plan.counts[i + 1]).map(Arc::new))
            .collect::<std::result::Result<_, _>>()?;

        Ok(Self {
            network: Network {
                config,
                plan,
                embeddings,
                encoder,
                decoder,
                projections,
                library,
                representation,
                encoder_mask,
                decoder_mask,
                positional,
                interpolations,
            },
            params: store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    /// Parameter count and per-group breakdown, one line per group.
    pub fn summary(&self) -> String {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for (name, t) in self.params.iter() {
            let group = name.split('.').next().unwrap_or(name).to_string();
            match groups.iter_mut().find(|(g, _)| *g == group) {
                Some((_, n)) => *n += t.len(),
                None => groups.push((group, t.len())),
            }
        }
        let mut out = format!("parameters: {}\n", self.params.count());
        for (g, n) in groups {
            out.push_str(&format!("  {g}: {n}\n"));
        }
        out
    }
}

/// Key/value memory for the decoder's context sub-layer.
#[derive(Clone, Debug)]
pub enum DecoderMemory {
    /// Context sub-layer reduces to a LayerNorm of its residual input.
    Disabled,
    /// Per-decoder-layer projections of a constant `G'`.
    Context(Vec<ProjectedMemory>),
}

/// Everything produced for one window.
#[derive(Clone, Debug)]
pub struct WindowOutput {
    pub bundle: MultiScaleBundle,
    /// Encoder output `H^L`, `P × d`.
    pub encoded: Var,
    /// Reconstructions `X̂_1 … X̂_m`, each a flat series of length `T_i`.
    pub reconstructions: Vec<Var>,
    pub routed: Option<Routed>,
    /// Sub-series representation `Rᵗ`, `S × d`.
    pub representation: Option<Var>,
}

/// One recorded forward computation over any number of windows.
///
/// Training mode (an RNG is supplied) enables dropout and Gumbel noise.
pub struct Forward<'a> {
    pub tape: Tape,
    pub bound: BoundParams,
    model: &'a Model,
    rng: Option<&'a mut ChaCha8Rng>,
    memory: DecoderMemory,
    positional: Vec<Var>,
    interpolations: Vec<Var>,
}

impl<'a> Forward<'a> {
    /// `context` is `G'`; ignored (and may be `None`) when the model has the
    /// context disabled.
    pub fn new(model: &'a Model, context: Option<&Tensor>, rng: Option<&'a mut ChaCha8Rng>) -> Result<Self> {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let net = &model.network;
        let positional = net.positional.iter().map(|t| tape.constant(Arc::clone(t))).collect();
        let interpolations = net.interpolations.iter().map(|t| tape.constant(Arc::clone(t))).collect();
        let mut fwd = Self {
            tape,
            bound,
            model,
            rng,
            memory: DecoderMemory::Disabled,
            positional,
            interpolations,
        };
        if net.config.use_context {
            let g = context.ok_or_else(|| Error::Config("model expects a global context".into()))?;
            fwd.set_context(g)?;
        }
        Ok(fwd)
    }

    /// Records `g` as a constant and projects it for every decoder layer.
    pub fn set_context(&mut self, g: &Tensor) -> Result<()> {
        let model = self.model;
        if g.cols() != model.network.config.d_model {
            return Err(Error::Shape(format!("context {:?} has the wrong width", g.shape())));
        }
        let gv = self.tape.constant(g.clone());
        let mut layers = Vec::with_capacity(model.network.decoder.len());
        for layer in &model.network.decoder {
            let w = layer.context_attention.bind(&self.bound);
            layers.push(w.project_memory(&mut self.tape, gv)?);
        }
        self.memory = DecoderMemory::Context(layers);
        Ok(())
    }

    pub fn disable_context(&mut self) {
        self.memory = DecoderMemory::Disabled;
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    fn dropout_mask(&mut self, len: usize) -> Option<Vec<f64>> {
        let rate = self.model.network.config.dropout;
        let rng = self.rng.as_deref_mut()?;
        if rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - rate);
        Some(
            (0..len)
                .map(|_| if rand::Rng::random::<f64>(rng) < rate { 0.0 } else { keep })
                .collect(),
        )
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        let shape = self.tape.value(x).shape().to_vec();
        match self.dropout_mask(shape.iter().product()) {
            Some(mask) => {
                let m = self.tape.constant(Tensor::new(shape, mask)?);
                Ok(self.tape.mul(x, m)?)
            }
            None => Ok(x),
        }
    }

    fn attention_dropout(&mut self, rows_q: usize, rows_k: usize) -> Option<Vec<f64>> {
        let heads = self.model.network.config.heads;
        self.dropout_mask(heads * rows_q * rows_k)
    }

    /// `H⁰`: patches of every coarse scale embedded, position-encoded and
    /// stacked along rows in scale order.
    pub fn patch_embed(&mut self, bundle: &MultiScaleBundle) -> Result<Var> {
        let model = self.model;
        let net = &model.network;
        net.plan.check(bundle)?;
        let p = net.plan.patch_len;
        let mut parts = Vec::with_capacity(net.plan.m());
        for i in 0..net.plan.m() {
            let patches = Tensor::from_rows(net.plan.counts[i], p, bundle.scale(i).to_vec())?;
            let x = self.tape.constant(patches);
            let h = net.embeddings[i].forward(&mut self.tape, &self.bound, x)?;
            parts.push(self.tape.add(h, self.positional[i])?);
        }
        Ok(self.tape.concat_rows(&parts)?)
    }

    /// Encoder stack under the scale-independent mask.
    pub fn encode(&mut self, h0: Var) -> Result<Var> {
        let model = self.model;
        let net = &model.network;
        let heads = net.config.heads;
        let rows = self.tape.value(h0).rows();
        if rows != net.encoder_mask.size() {
            return Err(Error::Shape(format!("encoder input has {rows} rows, mask {}", net.encoder_mask.size())));
        }
        let mut h = h0;
        for layer in &net.encoder {
            let w = layer.attention.bind(&self.bound);
            let drop = self.attention_dropout(rows, rows);
            let a = masked_attention(&mut self.tape, h, h, h, Some(&net.encoder_mask), &w, heads, drop)?;
            let r = self.tape.add(h, a)?;
            let h1 = layer.norm_attention.forward(&mut self.tape, &self.bound, r)?;
            let f = layer.feedforward.forward(&mut self.tape, &self.bound, h1)?;
            let f = self.dropout(f)?;
            let r = self.tape.add(h1, f)?;
            h = layer.norm_feedforward.forward(&mut self.tape, &self.bound, r)?;
        }
        Ok(h)
    }

    /// `Z⁰`: each scale's encoder rows linearly resampled from `P_i` to
    /// `P_{i+1}` rows, stacked.
    pub fn align_scales(&mut self, encoded: Var) -> Result<Var> {
        let model = self.model;
        let plan = &model.network.plan;
        let mut parts = Vec::with_capacity(plan.m());
        let mut offset = 0;
        for i in 0..plan.m() {
            let h = self.tape.slice_rows(encoded, offset, plan.counts[i])?;
            parts.push(self.tape.matmul(self.interpolations[i], h)?);
            offset += plan.counts[i];
        }
        Ok(self.tape.concat_rows(&parts)?)
    }

    /// Decoder stack: masked self-attention, context attention, feedforward.
    pub fn decode(&mut self, z0: Var) -> Result<Var> {
        let model = self.model;
        let net = &model.network;
        let heads = net.config.heads;
        let rows = self.tape.value(z0).rows();
        if rows != net.decoder_mask.size() {
            return Err(Error::Shape(format!("decoder input has {rows} rows, mask {}", net.decoder_mask.size())));
        }
        let memory = self.memory.clone();
        let mut z = z0;
        for (l, layer) in net.decoder.iter().enumerate() {
            let w = layer.self_attention.bind(&self.bound);
            let drop = self.attention_dropout(rows, rows);
            let a = masked_attention(&mut self.tape, z, z, z, Some(&net.decoder_mask), &w, heads, drop)?;
            let r = self.tape.add(z, a)?;
            let z1 = layer.norm_self.forward(&mut self.tape, &self.bound, r)?;
            let r = match &memory {
                DecoderMemory::Context(layers) => {
                    let mem = layers[l];
                    let rows_k = self.tape.value(mem.keys).rows();
                    let w = layer.context_attention.bind(&self.bound);
                    let drop = self.attention_dropout(rows, rows_k);
                    let c = attend_projected(&mut self.tape, z1, mem, None, &w, heads, drop)?;
                    self.tape.add(z1, c)?
                }
                DecoderMemory::Disabled => z1,
            };
            let z2 = layer.norm_context.forward(&mut self.tape, &self.bound, r)?;
            let f = layer.feedforward.forward(&mut self.tape, &self.bound, z2)?;
            let f = self.dropout(f)?;
            let r = self.tape.add(z2, f)?;
            z = layer.norm_feedforward.forward(&mut self.tape, &self.bound, r)?;
        }
        Ok(z)
    }

    /// Maps each decode block back to a series: block `i` gives `X̂_{i+1}`.
    pub fn project(&mut self, decoded: Var) -> Result<Vec<Var>> {
        let model = self.model;
        let net = &model.network;
        let mut out = Vec::with_capacity(net.plan.m());
        let mut offset = 0;
        for (i, &count) in net.plan.decoder_counts().iter().enumerate() {
            let rows = self.tape.slice_rows(decoded, offset, count)?;
            let patches = net.projections[i].forward(&mut self.tape, &self.bound, rows)?;
            out.push(self.tape.reshape(patches, vec![count * net.plan.patch_len])?);
            offset += count;
        }
        Ok(out)
    }

    /// Router mixture `qᵗ` for a raw window.
    pub fn route(&mut self, window: &[f64]) -> Result<Routed> {
        let model = self.model;
        let net = &model.network;
        if !net.config.use_router {
            return net.library.uniform(&mut self.tape, &self.bound);
        }
        let x_period = period_extract(window, net.library.top_k)?;
        let gumbel = match self.rng.as_deref_mut() {
            Some(rng) => sample_gumbel(net.library.count, rng),
            None => Vec::new(),
        };
        net.library.route(&mut self.tape, &self.bound, &x_period, &gumbel)
    }

    /// Full per-window pass: reconstruction and, with the context enabled,
    /// the sub-series representation.
    pub fn window(&mut self, window: &[f64]) -> Result<WindowOutput> {
        let model = self.model;
        let net = &model.network;
        if window.len() != net.config.window {
            return Err(Error::Shape(format!(
                "window of length {} for a model with window {}",
                window.len(),
                net.config.window
            )));
        }
        let bundle = generate_multiscale(window, &net.config.kernels)?;
        let h0 = self.patch_embed(&bundle)?;
        let encoded = self.encode(h0)?;
        let z0 = self.align_scales(encoded)?;
        let decoded = self.decode(z0)?;
        let reconstructions = self.project(decoded)?;
        let (routed, representation) = if net.config.use_context {
            let routed = self.route(window)?;
            let w = net.representation.bind(&self.bound);
            let rep = extract_subseries_rep(&mut self.tape, routed.query, encoded, &w, net.config.heads)?;
            (Some(routed), Some(rep))
        } else {
            (None, None)
        };
        Ok(WindowOutput {
            bundle,
            encoded,
            reconstructions,
            routed,
            representation,
        })
    }

    /// Reconstruction objective for one window: per-scale MSE summed over
    /// scales `1 … m`, or per-scale sum of squares when `sum_of_squares`.
    pub fn window_loss(&mut self, out: &WindowOutput, sum_of_squares: bool) -> Result<Var> {
        let mut total: Option<Var> = None;
        for (i, &recon) in out.reconstructions.iter().enumerate() {
            let target = out.bundle.scale(i + 1);
            let t = self.tape.constant(Tensor::new(vec![target.len()], target.to_vec())?);
            let diff = self.tape.sub(recon, t)?;
            let sq = self.tape.square(diff);
            let term = if sum_of_squares { self.tape.sum(sq) } else { self.tape.mean(sq) };
            total = Some(match total {
                Some(acc) => self.tape.add(acc, term)?,
                None => term,
            });
        }
        total.ok_or_else(|| Error::Shape("no reconstructed scales".into()))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        self.tape.value(var)
    }
}
