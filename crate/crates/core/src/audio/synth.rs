//! Deterministic synthetic corpora: sums of sinusoids whose partials switch
//! between "regimes" at random boundaries. Regime ids double as frame labels.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::codec::Encoding;
use super::sequence::EncodedSequence;
use super::wav::{read_wav, write_wav, Wav};
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partial {
    pub freq_hz: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub partials: Vec<Partial>,
}

impl Regime {
    pub fn sine(freq_hz: f64, amplitude: f64) -> Self {
        Self {
            partials: vec![Partial { freq_hz, amplitude }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub sample_rate: u32,
    pub bit_depth: u32,
    pub encoding: Encoding,
    pub regimes: Vec<Regime>,
    /// Duration range of one regime segment, in frames.
    pub regime_len: (usize, usize),
    pub noise_std: f64,
    /// Slow amplitude modulation period in frames; 0 disables it.
    pub envelope_period: usize,
    pub labeled: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            count: 8,
            min_len: 1000,
            max_len: 2000,
            sample_rate: 16000,
            bit_depth: 16,
            encoding: Encoding::MuLaw,
            regimes: vec![Regime::sine(440.0, 0.4), Regime::sine(1250.0, 0.25)],
            regime_len: (256, 768),
            noise_std: 0.002,
            envelope_period: 0,
            labeled: true,
        }
    }
}

impl GeneratorConfig {
    /// Fast oscillation inside slowly switching regimes with a slow envelope.
    pub fn two_timescale() -> Self {
        Self {
            regimes: vec![
                Regime {
                    partials: vec![
                        Partial { freq_hz: 500.0, amplitude: 0.35 },
                        Partial { freq_hz: 1500.0, amplitude: 0.1 },
                    ],
                },
                Regime {
                    partials: vec![
                        Partial { freq_hz: 250.0, amplitude: 0.2 },
                        Partial { freq_hz: 2000.0, amplitude: 0.15 },
                    ],
                },
                Regime::sine(1000.0, 0.3),
            ],
            regime_len: (512, 1024),
            envelope_period: 2048,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.count >= 1, "synthetic corpus needs count >= 1");
        ensure!(!self.regimes.is_empty(), "synthetic corpus needs at least one regime");
        ensure!(
            self.regimes.iter().all(|r| !r.partials.is_empty()),
            "every regime needs at least one partial"
        );
        ensure!(self.min_len >= 1 && self.min_len <= self.max_len, "invalid length range");
        ensure!(
            self.regime_len.0 >= 1 && self.regime_len.0 <= self.regime_len.1,
            "invalid regime length range"
        );
        ensure!(self.noise_std >= 0.0, "noise_std must be non-negative");
        Ok(())
    }
}

/// A PCM-16 waveform with optional per-frame labels, before encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub id: String,
    pub wav: Wav,
    pub labels: Option<Vec<u32>>,
}

impl Clip {
    pub fn encode(&self, encoding: Encoding, bit_depth: u32) -> Result<EncodedSequence> {
        EncodedSequence::from_linear(
            self.id.clone(),
            &self.wav.to_unit(),
            encoding,
            bit_depth,
            self.wav.sample_rate,
            self.labels.clone(),
        )
    }
}

/// Generates `cfg.count` sequences; identical for identical `(cfg, seed)`.
pub fn synth_dataset(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<EncodedSequence>> {
    synth_clips(cfg, seed)?
        .iter()
        .map(|c| c.encode(cfg.encoding, cfg.bit_depth))
        .collect()
}

/// The raw PCM clips behind [`synth_dataset`].
pub fn synth_clips(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<Clip>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).map_err(|e| Error::Contract(e.to_string()))?;
    let mut out = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let env_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut linear = Vec::with_capacity(len);
        let mut labels = Vec::with_capacity(len);
        let mut regime = rng.random_range(0..cfg.regimes.len());
        while linear.len() < len {
            let dur = rng.random_range(cfg.regime_len.0..=cfg.regime_len.1).min(len - linear.len());
            let phases: Vec<f64> = cfg.regimes[regime]
                .partials
                .iter()
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            for _ in 0..dur {
                let n = linear.len() as f64;
                let env = if cfg.envelope_period > 0 {
                    0.6 + 0.4 * (std::f64::consts::TAU * n / cfg.envelope_period as f64 + env_phase).sin()
                } else {
                    1.0
                };
                let tone: f64 = cfg.regimes[regime]
                    .partials
                    .iter()
                    .zip(&phases)
                    .map(|(p, ph)| p.amplitude * (std::f64::consts::TAU * p.freq_hz * n / cfg.sample_rate as f64 + ph).sin())
                    .sum();
                let eps = if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                linear.push((env * tone + eps).clamp(-1.0, 1.0));
                labels.push(regime as u32);
            }
            if cfg.regimes.len() > 1 {
                let step = rng.random_range(1..cfg.regimes.len());
                regime = (regime + step) % cfg.regimes.len();
            }
        }
        out.push(Clip {
            id: format!("syn{i:04}"),
            wav: Wav::from_unit(cfg.sample_rate, &linear),
            labels: cfg.labeled.then_some(labels),
        });
    }
    Ok(out)
}

/// Contiguous runs of equal labels as `(start, end, class)` with `end` exclusive.
pub fn label_spans(labels: &[u32]) -> Vec<(usize, usize, u32)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            if start < labels.len() {
                spans.push((start, i, labels[start]));
            }
            start = i;
        }
    }
    spans
}

pub fn spans_to_labels(spans: &[(usize, usize, u32)], len: usize) -> Result<Vec<u32>> {
    let mut labels = vec![u32::MAX; len];
    for &(s, e, c) in spans {
        ensure!(s < e && e <= len, "label span {s}..{e} outside sequence of length {len}");
        labels[s..e].iter_mut().for_each(|l| *l = c);
    }
    ensure!(labels.iter().all(|&l| l != u32::MAX), "label spans do not cover every frame");
    Ok(labels)
}

/// `start,end,class` triples joined by `;`, or `-` when unlabeled.
pub fn format_label_spec(labels: Option<&[u32]>) -> String {
    match labels {
        None => "-".into(),
        Some(l) => label_spans(l)
            .iter()
            .map(|(s, e, c)| format!("{s},{e},{c}"))
            .collect::<Vec<_>>()
            .join(";"),
    }
}

pub fn parse_label_spec(spec: &str) -> Result<Option<Vec<(usize, usize, u32)>>> {
    let spec = spec.trim();
    if spec == "-" || spec.is_empty() {
        return Ok(None);
    }
    let bad = |s: &str| Error::Format(format!("bad label span `{s}`"));
    spec.split(';')
        .map(|triple| {
            let parts: Vec<&str> = triple.split(',').collect();
            if parts.len() != 3 {
                return Err(bad(triple));
            }
            Ok((
                parts[0].trim().parse().map_err(|_| bad(triple))?,
                parts[1].trim().parse().map_err(|_| bad(triple))?,
                parts[2].trim().parse().map_err(|_| bad(triple))?,
            ))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// One manifest line: `id<TAB>length<TAB>label_spec`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub length: usize,
    pub label_spec: String,
}

pub fn format_manifest(clips: &[Clip]) -> String {
    clips
        .iter()
        .map(|c| format!("{}\t{}\t{}\n", c.id, c.wav.samples.len(), format_label_spec(c.labels.as_deref())))
        .collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!("manifest line {}: expected 3 tab-separated fields", n + 1)));
            }
            let length = parts[1]
                .parse()
                .map_err(|_| Error::Format(format!("manifest line {}: bad length `{}`", n + 1, parts[1])))?;
            Ok(ManifestRecord {
                id: parts[0].to_string(),
                length,
                label_spec: parts[2].to_string(),
            })
        })
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Writes `<id>.wav` per clip plus `manifest.tsv` into `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, clips: &[Clip]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for c in clips {
        write_wav(dir.join(format!("{}.wav", c.id)), &c.wav)?;
    }
    fs::write(dir.join(MANIFEST_NAME), format_manifest(clips))?;
    Ok(())
}

/// Reads a corpus written by [`write_corpus`] (or any WAV set with a manifest).
pub fn read_corpus(dir: impl AsRef<Path>, encoding: Encoding, bit_depth: u32) -> Result<Vec<EncodedSequence>> {
    read_clips(dir)?.iter().map(|c| c.encode(encoding, bit_depth)).collect()
}

pub fn read_clips(dir: impl AsRef<Path>) -> Result<Vec<Clip>> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    parse_manifest(&manifest)?
        .into_iter()
        .map(|rec| {
            let wav = read_wav(dir.join(format!("{}.wav", rec.id)))?;
            ensure!(
                wav.samples.len() == rec.length,
                "{}: manifest length {} but WAV holds {} samples",
                rec.id,
                rec.length,
                wav.samples.len()
            );
            let labels = parse_label_spec(&rec.label_spec)?
                .map(|spans| spans_to_labels(&spans, rec.length))
                .transpose()?;
            Ok(Clip { id: rec.id, wav, labels })
        })
        .collect()
}
