//! A speech-waveform autoencoder built around differentiable spectral
//! transforms.
//!
//! The encoder computes an STFT, stacks magnitude, phase, real, and imaginary
//! planes into a four-channel image, runs a small residual convolutional
//! network over it, and projects each frame to a low-dimensional embedding.
//! The decoder mirrors this: a per-frame linear lift, the transposed block
//! stack, an output head that reassembles a complex spectrogram, and a
//! differentiable inverse STFT back to the waveform. Because both transforms
//! are ordinary graph operations, waveform- and mel-domain losses — plus
//! optional multi-period/multi-scale adversarial losses — backpropagate
//! end to end; nothing is autoregressive, so synthesis is a single pass.
//!
//! Module map:
//!
//! * [`tensor`] / [`scalar`] — dense row-major tensors over `f32`/`f64`.
//! * [`autodiff`] — the eager reverse-mode graph the networks train on.
//! * [`dsp`] — windows, real DFTs, framing, STFT/iSTFT, mel filterbanks,
//!   and a Griffin-Lim baseline; [`dsp::graph`] holds the differentiable
//!   counterparts.
//! * [`model`] — encoder/decoder networks and the [`model::Autovocoder`].
//! * [`losses`] — reconstruction and adversarial objectives, including the
//!   period/scale discriminator ensemble.
//! * [`trainer`] — Adam, the two-phase training loop, and checkpointing.
//! * [`audio`] — WAV I/O, test-signal synthesis, and corpus manifests.
//! * [`config`] — one flat text format for every knob above.
//! * [`verify`] — finite-difference checks for the whole backward pass.
//!
//! Everything is generic over the scalar type; the `*32`/`*64` aliases below
//! pin the two supported precisions.

pub mod audio;
pub mod autodiff;
pub mod config;
pub mod dsp;
pub mod error;
pub mod losses;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Waveform32 = dsp::Waveform<f32>;
pub type Waveform64 = dsp::Waveform<f64>;
pub type Autovocoder32 = model::Autovocoder<f32>;
pub type Autovocoder64 = model::Autovocoder<f64>;
pub type Latent32 = model::Latent<f32>;
pub type Latent64 = model::Latent<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
pub type Trainer64 = trainer::Trainer<f64>;
