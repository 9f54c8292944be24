//! Layer-indexed transformer encoder with mean pooling, a dense intent head
//! and a shared K / (K+1)-way classifier.

mod checkpoint;
mod config;
mod hidden;
mod model;
mod ops;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{EncoderConfig, Trainability};
pub use hidden::{mean_pool, HiddenStates};
pub use model::EncoderModel;
pub use params::{BlockParams, EncoderParams, LayerNormParams, ParamGroup, ParamTensor, TensorMut, TensorRef};
