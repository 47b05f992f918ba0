use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{Encoding, GeneratorConfig};
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::probe::{Budget, MelConfig, ProbeConfig};
use crate::train::TrainConfig;

pub const RESOLVED_NAME: &str = "config.resolved";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Corpus directories holding WAV files and a manifest.
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub encoding: Encoding,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            val: None,
            test: None,
            encoding: Encoding::MuLaw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Uniform,
    /// Two-component DMoL fitted to the training frames.
    Dmol,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: Option<PathBuf>,
    /// Evaluate a baseline instead of a checkpoint.
    pub baseline: Option<Baseline>,
    /// Subsegment length in steps; whole sequences when unset.
    pub segment_steps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub checkpoint: Option<PathBuf>,
    /// Share of labeled utterances held out for the recognizer's error rate.
    pub test_fraction: f64,
    pub budgets: Vec<Budget>,
    pub include_mel: bool,
    pub mel: MelConfig,
    pub asr: ProbeConfig,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            test_fraction: 0.25,
            budgets: Budget::ALL.to_vec(),
            include_mel: true,
            mel: MelConfig::default(),
            asr: ProbeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub checkpoint: Option<PathBuf>,
    pub count: usize,
    pub frames: usize,
    pub sample_rate: u32,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            count: 1,
            frames: 16000,
            sample_rate: 16000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Tables written by `eval`.
    pub inputs: Vec<PathBuf>,
    pub include_flac: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            include_flac: true,
        }
    }
}

/// Everything one command needs. The resolved form written next to every
/// run's outputs reproduces it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub synth: GeneratorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub probe: ProbeSection,
    pub sample: SampleConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            synth: GeneratorConfig::default(),
            model: ModelConfig::desk(crate::models::ModelKind::Lstm, 64),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            probe: ProbeSection::default(),
            sample: SampleConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Pushes the run seed into every seeded section.
    pub fn resolve(&mut self) {
        self.train.seed = self.seed;
        self.probe.asr.seed = self.seed;
    }

    pub fn write_resolved(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(RESOLVED_NAME);
        fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let mut c = RunConfig::default();
        c.command = "train".into();
        c.data.train = Some("corpus".into());
        c.eval.baseline = Some(Baseline::Uniform);
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = RunConfig::from_toml("seed = 4\n[model]\nkind = \"vrnn\"\nstack = 16\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.stack, 16);
        assert_eq!(c.model.dz, ModelConfig::default().dz);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("sead = 4\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[model]\nwidth = 3\n"), Err(Error::Config(_))));
    }
}
