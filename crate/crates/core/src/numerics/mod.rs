//! Dense tensors, reverse-mode autodiff, attention, and signal primitives.

mod attention;
mod fft;
pub(crate) mod gemm;
mod mask;
mod signal;
mod tape;
mod tensor;

pub use attention::{attend_projected, masked_attention, AttentionWeights, ProjectedMemory};
pub use fft::{dft, idft_topk, Spectrum};
pub use mask::MaskMatrix;
pub use signal::{avg_pool, interpolation_matrix, linear_interpolate};
pub use tape::{AttentionRecord, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("width {dim} is not divisible by {heads} heads")]
    Heads { dim: usize, heads: usize },
    #[error("mask row {0} blocks every column")]
    FullyBlockedRow(usize),
    #[error("rows {start}..{} out of range for {rows} rows", start + count)]
    SliceOutOfRange { start: usize, count: usize, rows: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("node {0} references a later node; graph is not acyclic")]
    CyclicGraph(usize),
    #[error("series of length {len} cannot be pooled with kernel {kernel}")]
    PoolKernel { len: usize, kernel: usize },
    #[error("series of length {len} is shorter than {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("top-k of {k} out of range for {bins} spectrum bins")]
    TopK { k: usize, bins: usize },
}
