//! Open intent classification with soft labeling and manifold mixup.
//!
//! A text encoder is trained on K known intents and learns a decision
//! region for a proxy open class `K+1` from known-class data alone:
//! known samples get softened label distributions that reserve some mass
//! for the open class, and hidden states of different-class pairs are
//! interpolated at an intermediate encoder layer to synthesize open-class
//! samples.
//!
//! The crate is organised as:
//! - [`data`]: corpora, vocabulary, known/open splits, synthetic corpora, batching
//! - [`encoder`]: the layer-indexed encoder, intent head and shared classifier
//! - [`softlabel`]: softened targets and the KL-divergence loss
//! - [`mixup`]: pair sampling, hidden-state interpolation and the open-class loss
//! - [`trainer`]: pretraining, open-intent training, scheduling, early stopping
//! - [`eval`]: prediction, the MSP baseline, metrics and dumps
//! - [`pipeline`]: end-to-end experiment helpers shared by the CLI and examples
//! - [`cli`]: the command-line front end

pub mod cli;
pub mod data;
pub mod encoder;
mod error;
pub mod eval;
pub mod loss;
pub mod mixup;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod softlabel;
pub mod trainer;

pub use error::{Error, Result};
