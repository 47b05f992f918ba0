use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Wavenet,
    Vrnn,
    Srnn,
    Stcn,
    Cwvae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [Self::Lstm, Self::Wavenet, Self::Vrnn, Self::Srnn, Self::Stcn, Self::Cwvae];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lstm => "lstm",
            Self::Wavenet => "wavenet",
            Self::Vrnn => "vrnn",
            Self::Srnn => "srnn",
            Self::Stcn => "stcn",
            Self::Cwvae => "cwvae",
        }
    }

    /// Carries recurrent state across time (trained on full sequences).
    pub fn is_stateful(self) -> bool {
        !matches!(self, Self::Wavenet | Self::Stcn)
    }

    pub fn has_latents(self) -> bool {
        !matches!(self, Self::Lstm | Self::Wavenet)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown model `{s}` (expected lstm, wavenet, vrnn, srnn, stcn or cwvae)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Dmol,
    Gaussian,
}

/// Architecture hyperparameters. Strides and stack sizes are in steps and
/// frames respectively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Latent width (VRNN, SRNN, CW-VAE); base width of the STCN hierarchy.
    pub dz: usize,
    /// Recurrent state width.
    pub dd: usize,
    /// Hidden width of MLPs and conv channels.
    pub dc: usize,
    /// Latent layers (STCN, CW-VAE).
    pub layers: usize,
    /// Frames per step.
    pub stack: usize,
    /// CW-VAE bottom stride `s_1`, in steps.
    pub stride: usize,
    /// CW-VAE stride factor `c`.
    pub factor: usize,
    pub output: OutputKind,
    pub components: usize,
    pub var_floor: f64,
    pub bit_depth: u32,
    pub wavenet_blocks: usize,
    pub wavenet_layers: usize,
    /// Dilated layers in the STCN decoder.
    pub decoder_layers: usize,
    /// Posterior reuses the prior network and inputs, so every KL is zero.
    pub tie_posterior: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Lstm,
            dz: 16,
            dd: 64,
            dc: 64,
            layers: 1,
            stack: 64,
            stride: 1,
            factor: 8,
            output: OutputKind::Dmol,
            components: crate::dists::DEFAULT_COMPONENTS,
            var_floor: crate::dists::DEFAULT_VAR_FLOOR,
            bit_depth: 16,
            wavenet_blocks: 5,
            wavenet_layers: 10,
            decoder_layers: 2,
            tie_posterior: false,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, ..Self::default() }
    }

    /// A small configuration that trains in seconds on one core.
    pub fn desk(kind: ModelKind, stack: usize) -> Self {
        let mut cfg = Self {
            kind,
            stack,
            dz: 8,
            dd: 32,
            dc: 32,
            components: 5,
            wavenet_blocks: 1,
            wavenet_layers: 4,
            decoder_layers: 1,
            ..Self::default()
        };
        match kind {
            ModelKind::Stcn => {
                cfg.layers = 5;
                cfg.wavenet_blocks = 5;
                cfg.dz = 4;
                cfg.wavenet_layers = 2;
            }
            ModelKind::Cwvae => {
                cfg.layers = 2;
                cfg.factor = 4;
            }
            _ => {}
        }
        cfg
    }

    /// Number of reals the output head emits per frame.
    pub fn head_width(&self) -> usize {
        match self.output {
            OutputKind::Dmol => 3 * self.components,
            OutputKind::Gaussian => 2,
        }
    }

    pub fn latent_layers(&self) -> usize {
        match self.kind {
            ModelKind::Lstm | ModelKind::Wavenet => 0,
            ModelKind::Vrnn | ModelKind::Srnn => 1,
            ModelKind::Stcn | ModelKind::Cwvae => self.layers,
        }
    }

    /// CW-VAE per-layer strides `s_l = c^(l-1) s_1`, bottom first.
    pub fn strides(&self) -> Vec<usize> {
        (0..self.layers.max(1)).map(|l| self.stride * self.factor.pow(l as u32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.dz >= 1 && self.dd >= 1 && self.dc >= 1, "model widths must be positive");
        ensure!(self.stack >= 1, "stack size must be >= 1");
        ensure!((1..=24).contains(&self.bit_depth), "bit depth {} unsupported", self.bit_depth);
        ensure!(self.components >= 1, "need at least one mixture component");
        ensure!(self.var_floor >= 0.0, "variance floor must be non-negative");
        match self.kind {
            ModelKind::Wavenet => ensure!(self.wavenet_blocks >= 1 && self.wavenet_layers >= 1, "WaveNet needs blocks and layers"),
            ModelKind::Stcn => {
                ensure!((1..=5).contains(&self.layers), "STCN supports 1 to 5 latent layers, got {}", self.layers);
                ensure!(self.wavenet_layers >= 1, "STCN encoder needs layers");
            }
            ModelKind::Cwvae => {
                ensure!(self.factor >= 2, "CW-VAE stride factor c must be >= 2, got {}", self.factor);
                ensure!(self.stride >= 1 && self.layers >= 1, "CW-VAE needs s_1 >= 1 and L >= 1");
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("transformer".parse::<ModelKind>().is_err());
    }

    #[test]
    fn strides_grow_by_factor() {
        let cfg = ModelConfig {
            kind: ModelKind::Cwvae,
            stride: 64,
            factor: 8,
            layers: 3,
            ..ModelConfig::default()
        };
        assert_eq!(cfg.strides(), vec![64, 512, 4096]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ModelConfig::new(ModelKind::Cwvae);
        c.factor = 1;
        assert!(c.validate().is_err());
        let mut s = ModelConfig::new(ModelKind::Stcn);
        s.layers = 6;
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ModelConfig::desk(ModelKind::Vrnn, 64);
        let text = toml::to_string(&cfg).unwrap();
        let back: ModelConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
