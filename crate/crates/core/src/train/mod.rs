//! Optimization: Adam, the training loop and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod run;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Regime, TrainConfig};
pub use run::{kl_weight, train, window_gradients, MetricRow, TrainState};

#[cfg(test)]
mod tests;
