//! Spiking front-end with layer-local learning feeding a hyperdimensional
//! classifier.
//!
//! The crate is organised bottom-up:
//!
//! * [`encoder`]: random projection into hyperspace, binarization,
//!   similarity, pseudoinverse and gradient back-projection.
//! * [`memory`]: class hypervectors with single-pass adaptive training.
//! * [`snn`]: LIF network, fixed readouts, surrogate-gradient learning.
//! * [`pipeline`]: the three training phases and online mode.
//! * [`data`]: loaders, rate coding and synthetic tasks.
//! * [`bench`]: fault injection and parameter sweeps.
//! * [`config`], [`report`], [`cli`]: experiment plumbing.

pub mod bench;
pub mod cli;
pub(crate) mod codec;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod memory;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod snn;
pub mod spikes;

pub use encoder::{Activation, BackpropMode, EncoderBasis, Hypervector};
pub use error::{Error, Result};
pub use memory::{ClassMemory, HdTrainConfig, Label};
pub use pipeline::{ModelConfig, PhaseConfig, SpikeHdModel};
pub use snn::{LifNetwork, LifParams, Pooling};
pub use spikes::SpikeTrain;
