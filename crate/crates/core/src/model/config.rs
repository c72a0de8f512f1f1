use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture of the cross-scale reconstruction network and its
/// cross-window branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length `T_m`.
    pub window: usize,
    /// Pooling kernels, coarsest first. One coarse scale per kernel.
    pub kernels: Vec<usize>,
    pub patch_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Inner width of the feedforward sub-layers as a multiple of `d_model`.
    pub ff_mult: usize,
    pub dropout: f64,
    /// Rows `S` of each sub-series query and prototype.
    pub query_len: usize,
    /// Library size `n`.
    pub queries: usize,
    /// Prototype count `K` of the global context.
    pub prototypes: usize,
    /// Frequencies kept by the period-aware router.
    pub top_k: usize,
    pub temperature: f64,
    pub router_hidden: usize,
    /// EMA decay `α` for prototype updates.
    pub decay: f64,
    pub use_router: bool,
    pub use_context: bool,
    /// Replace the cross-scale decoder mask with a block-diagonal one.
    pub self_reconstruction: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window: 256,
            kernels: vec![32, 16, 8, 4, 2],
            patch_len: 8,
            d_model: 128,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ff_mult: 4,
            dropout: 0.1,
            query_len: 16,
            queries: 5,
            prototypes: 32,
            top_k: 3,
            temperature: 1.0,
            router_hidden: 64,
            decay: 0.95,
            use_router: true,
            use_context: true,
            self_reconstruction: false,
        }
    }
}

impl ModelConfig {
    /// Number of coarse scales `m`.
    pub fn scales(&self) -> usize {
        self.kernels.len()
    }

    /// Series lengths `T_0 … T_m`.
    pub fn scale_lengths(&self) -> Vec<usize> {
        self.kernels
            .iter()
            .map(|k| self.window / k)
            .chain(std::iter::once(self.window))
            .collect()
    }

    /// Patch counts `P_0 … P_m`.
    pub fn patch_counts(&self) -> Vec<usize> {
        self.scale_lengths().iter().map(|t| t / self.patch_len).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.kernels.is_empty() {
            return fail("at least one pooling kernel is required".into());
        }
        if self.kernels.windows(2).any(|w| w[0] <= w[1]) {
            return fail(format!("kernels {:?} must be strictly decreasing", self.kernels));
        }
        if self.kernels.iter().any(|&k| k < 2) {
            return fail(format!("kernels {:?} must all be at least 2", self.kernels));
        }
        if self.patch_len == 0 {
            return fail("patch_len must be positive".into());
        }
        let largest = self.kernels[0];
        let unit = largest * self.patch_len;
        if self.window == 0 || self.window % unit != 0 {
            return fail(format!(
                "window {} must be divisible by largest kernel × patch_len = {} × {} = {}",
                self.window, largest, self.patch_len, unit
            ));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            ));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 || self.ff_mult == 0 {
            return fail("layer counts and ff_mult must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.query_len == 0 || self.queries == 0 || self.prototypes == 0 || self.router_hidden == 0 {
            return fail("query_len, queries, prototypes and router_hidden must be positive".into());
        }
        let bins = self.window / 2 + 1;
        if self.top_k == 0 || self.top_k > bins {
            return fail(format!("top_k {} must lie in 1..={bins}", self.top_k));
        }
        if !(self.temperature > 0.0) {
            return fail(format!("temperature {} must be positive", self.temperature));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail(format!("decay {} must lie in (0, 1]", self.decay));
        }
        Ok(())
    }
}
