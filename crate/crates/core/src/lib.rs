//! Doppler-robust PSK demodulation for shallow-water acoustic links.
//!
//! The pipeline frames a received passband signal, maps each frame through
//! a stack of restricted Boltzmann machines to a 28×28 feature image, and
//! classifies the image with either a dense or a convolutional network. A
//! coherent correlator serves as the maximum-likelihood reference, and
//! [`harness`] reproduces the bit-error-rate and accuracy experiments.

pub mod baseline;
pub mod classify;
pub mod dbn;
pub mod error;
pub mod harness;
pub mod scalar;
pub mod seed;
pub mod sigproc;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use sigproc::{ChannelConfig, FrameBatch, ModulationConfig, PskScheme, Waveform};

pub type WaveformF32 = sigproc::Waveform<f32>;
pub type WaveformF64 = sigproc::Waveform<f64>;
pub type RbmLayerF32 = dbn::RbmLayer<f32>;
pub type RbmLayerF64 = dbn::RbmLayer<f64>;
pub type DbnModelF32 = dbn::DbnModel<f32>;
pub type DbnModelF64 = dbn::DbnModel<f64>;
pub type DenseNetF32 = classify::DenseNet<f32>;
pub type DenseNetF64 = classify::DenseNet<f64>;
pub type ConvNetF32 = classify::ConvNet<f32>;
pub type ConvNetF64 = classify::ConvNet<f64>;
pub type ModelArtifactF32 = harness::artifact::ModelArtifact<f32>;
pub type ModelArtifactF64 = harness::artifact::ModelArtifact<f64>;
