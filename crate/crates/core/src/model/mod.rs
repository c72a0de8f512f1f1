//! Cross-scale reconstruction network: multi-scale generation, patch
//! embedding, scale-independent encoding, interpolation alignment,
//! cross-scale decoding and output projection.

mod bundle;
pub mod checkpoint;
mod config;
pub mod layers;
mod masks;
mod network;
pub mod params;

pub use bundle::{generate_multiscale, MultiScaleBundle};
pub use config::ModelConfig;
pub use masks::{build_cross_scale_mask, build_scale_independent_mask};
pub use network::{DecoderMemory, Forward, Model, Network, PatchPlan, WindowOutput};
pub use params::{BoundParams, ParamId, ParamStore};
