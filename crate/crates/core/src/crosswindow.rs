//! Cross-window modeling: the query library with its period-aware router,
//! sub-series representations, and the EMA-maintained global context.

use rand::Rng;

use crate::model::layers::Linear;
use crate::model::params::{BoundParams, ParamId, ParamStore};
use crate::numerics::{dft, idft_topk, masked_attention, AttentionWeights, Tape, Tensor, Var};
use crate::{Error, Result};

/// Keeps the `k` dominant frequencies of `window` and transforms back.
pub fn period_extract(window: &[f64], k: usize) -> Result<Vec<f64>> {
    let spectrum = dft(window)?;
    Ok(idft_topk(&spectrum, k)?)
}

/// Learnable sub-series queries plus the MLP that scores them.
#[derive(Clone, Debug)]
pub struct QueryLibrary {
    /// `n × (S·d)`: query `i` is row `i` reshaped to `S × d`.
    pub queries: ParamId,
    pub hidden: Linear,
    pub logits: Linear,
    pub count: usize,
    pub query_len: usize,
    pub d_model: usize,
    pub temperature: f64,
    pub top_k: usize,
}

/// Output of [`QueryLibrary::route`].
#[derive(Clone, Copy, Debug)]
pub struct Routed {
    /// Mixture weights, `1 × n`.
    pub weights: Var,
    /// Mixed query `qᵗ`, `S × d`.
    pub query: Var,
}

impl QueryLibrary {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        window: usize,
        hidden: usize,
        count: usize,
        query_len: usize,
        d_model: usize,
        temperature: f64,
        top_k: usize,
        rng: &mut R,
    ) -> Self {
        let queries = store.add_uniform("library.queries", &[count, query_len * d_model], d_model, rng);
        Self {
            queries,
            hidden: Linear::new(store, "library.router.hidden", window, hidden, rng),
            logits: Linear::new(store, "library.router.logits", hidden, count, rng),
            count,
            query_len,
            d_model,
            temperature,
            top_k,
        }
    }

    /// Routing logits `u = MLP(x_period)`, `1 × n`.
    pub fn router_logits(&self, tape: &mut Tape, p: &BoundParams, x_period: &[f64]) -> Result<Var> {
        let x = tape.constant(Tensor::row_vector(x_period.to_vec()));
        let h = self.hidden.forward(tape, p, x)?;
        let h = tape.gelu(h);
        self.logits.forward(tape, p, h)
    }

    pub fn route(&self, tape: &mut Tape, p: &BoundParams, x_period: &[f64], gumbel: &[f64]) -> Result<Routed> {
        let u = self.router_logits(tape, p, x_period)?;
        mix_queries(tape, u, p.var(self.queries), gumbel, self.temperature, self.query_len)
    }

    /// Equal-weight mixture, used when routing is disabled.
    pub fn uniform(&self, tape: &mut Tape, p: &BoundParams) -> Result<Routed> {
        let u = tape.constant(Tensor::zeros(&[1, self.count]));
        mix_queries(tape, u, p.var(self.queries), &[], 1.0, self.query_len)
    }
}

/// Gumbel-softmax mixture `Σ_i softmax((u + g)/τ)_i q_i`.
///
/// `gumbel` may be empty for zero noise. `queries` is `n × (S·d)`.
pub fn mix_queries(
    tape: &mut Tape,
    logits: Var,
    queries: Var,
    gumbel: &[f64],
    temperature: f64,
    query_len: usize,
) -> Result<Routed> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature {temperature} must be positive")));
    }
    let n = tape.value(logits).len();
    let width = tape.value(queries).cols();
    if tape.value(queries).rows() != n || width % query_len != 0 {
        return Err(Error::Shape(format!(
            "{n} routing logits for queries of shape {:?}",
            tape.value(queries).shape()
        )));
    }
    let mut shifted = logits;
    if !gumbel.is_empty() {
        if gumbel.len() != n {
            return Err(Error::Shape(format!("{} gumbel samples for {n} queries", gumbel.len())));
        }
        let noise = tape.constant(Tensor::row_vector(gumbel.to_vec()));
        shifted = tape.add(logits, noise)?;
    }
    let scaled = tape.scale(shifted, 1.0 / temperature);
    let weights = tape.softmax_rows(scaled);
    let mixed = tape.matmul(weights, queries)?;
    let query = tape.reshape(mixed, vec![query_len, width / query_len])?;
    Ok(Routed { weights, query })
}

/// Samples standard Gumbel noise `-ln(-ln U)`.
pub fn sample_gumbel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Unmasked cross-attention of the mixed query over the encoder output.
pub fn extract_subseries_rep(
    tape: &mut Tape,
    query: Var,
    encoded: Var,
    weights: &AttentionWeights,
    heads: usize,
) -> Result<Var> {
    Ok(masked_attention(tape, query, encoded, encoded, None, weights, heads, None)?)
}

/// `K` prototypes of shape `S × d`, updated by EMA outside gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalContext {
    prototypes: Vec<Tensor>,
    decay: f64,
}

impl GlobalContext {
    pub fn new(prototypes: Vec<Tensor>, decay: f64) -> Result<Self> {
        let first = prototypes
            .first()
            .ok_or_else(|| Error::Config("global context needs at least one prototype".into()))?;
        if prototypes.iter().any(|p| p.shape() != first.shape() || p.shape().len() != 2) {
            return Err(Error::Shape("prototypes must share one S × d shape".into()));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!("decay {decay} must lie in (0, 1]")));
        }
        Ok(Self { prototypes, decay })
    }

    /// Standard-normal initialization.
    pub fn random<R: Rng + ?Sized>(count: usize, rows: usize, d: usize, decay: f64, rng: &mut R) -> Result<Self> {
        let prototypes = (0..count).map(|_| Tensor::standard_normal(&[rows, d], rng)).collect();
        Self::new(prototypes, decay)
    }

    pub fn prototypes(&self) -> &[Tensor] {
        &self.prototypes
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Moves the nearest prototype (flattened Euclidean distance, lowest index
    /// on ties) towards `rep`: `g_j ← α g_j + (1 − α) rep`. Returns `j`.
    pub fn update(&mut self, rep: &Tensor) -> Result<usize> {
        if rep.shape() != self.prototypes[0].shape() {
            return Err(Error::Shape(format!(
                "representation {:?} vs prototype {:?}",
                rep.shape(),
                self.prototypes[0].shape()
            )));
        }
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, g) in self.prototypes.iter().enumerate() {
            let dist = g
                .data()
                .iter()
                .zip(rep.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        let alpha = self.decay;
        for (g, r) in self.prototypes[best].data_mut().iter_mut().zip(rep.data()) {
            *g = alpha * *g + (1.0 - alpha) * r;
        }
        Ok(best)
    }

    /// Prototypes stacked along rows: `(K·S) × d`.
    pub fn concat(&self) -> Tensor {
        let rows = self.prototypes[0].rows();
        let d = self.prototypes[0].cols();
        let data = self.prototypes.iter().flat_map(|p| p.data().iter().copied()).collect();
        Tensor::from_rows(rows * self.prototypes.len(), d, data).expect("prototype shapes are validated")
    }
}
