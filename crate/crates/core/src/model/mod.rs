//! Encoder-decoder transformer with explicit forward and backward passes,
//! extendable embeddings, residual adapters and per-tensor freezing.

mod config;
mod incremental;
mod layers;
mod params;
mod transformer;

pub use config::ModelConfig;
pub use incremental::IncrementalDecoder;
pub use params::{extend_embeddings, init_model, insert_adapters, Gradients, Model, Parameters, Tensor};
pub use transformer::{Example, LossOutput};
