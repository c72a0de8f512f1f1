//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xscale_core::model::ModelConfig;
use xscale_core::numerics::Tensor;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    Tensor::uniform(&[rows, cols], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_series(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|t| (t as f64 * 0.07).sin() + 0.1 * rng.random_range(-1.0..1.0))
        .collect()
}

/// Labels with a short event every `gap` points.
pub fn periodic_labels(len: usize, gap: usize, width: usize) -> Vec<u8> {
    (0..len).map(|t| u8::from(t % gap < width)).collect()
}

/// The default architecture at a smaller width, for per-window timings.
pub fn bench_model() -> ModelConfig {
    ModelConfig {
        d_model: 32,
        ..ModelConfig::default()
    }
}
