//! Sequential latent variable models for raw waveform likelihood benchmarking.
//!
//! The crate is organized bottom-up:
//!
//! - [`numcore`]: tensors and a reverse-mode autodiff tape.
//! - [`audio`]: mu-law and linear encodings, WAV I/O, frame stacking,
//!   synthetic corpora and length-bucketed batching.
//! - [`dists`]: discretized mixture of logistics, floored Gaussians, KL and
//!   the uniform / fitted-mixture baselines.
//! - [`models`]: LSTM, WaveNet, VRNN, SRNN, STCN and Clockwork VAE.
//! - [`train`]: Adam, checkpoints and the training loop.
//! - [`eval`]: bits-per-frame accounting and segmented evaluation.
//! - [`probe`]: Mel features, LDA, KNN, CTC and a recurrent phoneme probe.
//! - [`cli`]: the `slvm` command line front end.

pub mod audio;
pub mod cli;
pub mod dists;
pub mod error;
pub mod eval;
pub mod models;
pub mod numcore;
pub mod probe;
pub mod train;

pub use error::{Error, Result};
