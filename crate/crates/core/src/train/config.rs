use serde::{Deserialize, Serialize};

use super::AdamConfig;
use crate::error::{ensure, Result};
use crate::models::SequenceModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Sequences per update.
    pub batch_size: usize,
    pub max_steps: u64,
    /// Subsegment length in frames for stateless models at `s = 1`.
    pub segment_length: usize,
    pub seed: u64,
    /// Linear ramp of the KL weight from 0 to 1; 0 disables.
    pub kl_warmup_steps: u64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Validation interval in steps; 0 disables.
    pub val_every: u64,
    /// Consecutive steps above `uniform + 1` bpf before a run is flagged.
    pub divergence_patience: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 1,
            max_steps: 1000,
            segment_length: 16000,
            seed: 0,
            kl_warmup_steps: 0,
            clip_norm: 100.0,
            val_every: 0,
            divergence_patience: 500,
        }
    }
}

/// How sequences are presented to the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Whole sequences, state reset per sequence.
    FullSequence,
    /// Random subsegments of this many steps, redrawn every epoch.
    Subsegment(usize),
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Stateless models at `s < 64` train on subsegments; everything else on
    /// full sequences.
    pub fn regime(&self, model: &dyn SequenceModel) -> Regime {
        let cfg = model.config();
        if !cfg.kind.is_stateful() && cfg.stack < 64 {
            Regime::Subsegment(self.segment_length.div_ceil(cfg.stack))
        } else {
            Regime::FullSequence
        }
    }

    pub fn validate(&self, model: &dyn SequenceModel) -> Result<()> {
        ensure!(self.lr > 0.0 && self.lr.is_finite(), "lr must be positive, got {}", self.lr);
        ensure!((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2), "Adam betas must lie in [0, 1)");
        ensure!(self.eps > 0.0, "Adam eps must be positive");
        ensure!(self.batch_size >= 1, "batch_size must be >= 1");
        ensure!(self.clip_norm > 0.0, "clip_norm must be positive");
        if let (Regime::Subsegment(steps), Some(rf)) = (self.regime(model), model.receptive_field()) {
            ensure!(
                steps >= rf,
                "segment_length of {} frames is shorter than the receptive field ({rf} steps)",
                self.segment_length
            );
        }
        Ok(())
    }
}
