//! Bits-per-frame accounting, segmented evaluation and report tables.

mod report;

pub use report::{flac_references, format_report, parse_report, FlacReference, ReportRow};

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::audio::EncodedSequence;
use crate::error::{ensure, Error, Result};
use crate::models::{valid_steps, Carry, ElboTerms, Noise, SequenceModel, Window};
use crate::numcore::Tape;

/// Reported cost in bits per frame for a summed log-likelihood in nats.
/// Positive, lower is better.
pub fn to_bpf(total_nats: f64, total_frames: usize) -> Result<f64> {
    ensure!(total_frames > 0, "cannot convert to bits per frame with zero frames");
    Ok(-(total_nats / LN_2) / total_frames as f64)
}

/// How a sequence is cut for evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SegmentConfig {
    /// Counted steps per segment; `None` evaluates each sequence in one pass.
    pub steps: Option<usize>,
}

impl SegmentConfig {
    pub fn whole() -> Self {
        Self { steps: None }
    }

    pub fn steps(n: usize) -> Self {
        Self { steps: Some(n) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleMetrics {
    pub id: String,
    pub frames: usize,
    /// Reconstruction log-likelihood (nats).
    pub recon: f64,
    /// KL per latent layer (nats), bottom first.
    pub kl: Vec<f64>,
}

impl ExampleMetrics {
    pub fn elbo(&self) -> f64 {
        self.recon - self.kl.iter().sum::<f64>()
    }

    pub fn bpf(&self) -> Result<f64> {
        to_bpf(self.elbo(), self.frames)
    }
}

/// Per-example terms plus frame-weighted aggregates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub examples: Vec<ExampleMetrics>,
}

impl MetricsRecord {
    pub fn frames(&self) -> usize {
        self.examples.iter().map(|e| e.frames).sum()
    }

    pub fn recon(&self) -> f64 {
        self.examples.iter().map(|e| e.recon).sum()
    }

    pub fn kl(&self) -> Vec<f64> {
        let layers = self.examples.iter().map(|e| e.kl.len()).max().unwrap_or(0);
        (0..layers)
            .map(|l| self.examples.iter().map(|e| e.kl.get(l).copied().unwrap_or(0.0)).sum())
            .collect()
    }

    /// Total ELBO (log-likelihood bound) in nats.
    pub fn elbo(&self) -> f64 {
        self.recon() - self.kl().iter().sum::<f64>()
    }

    pub fn bpf(&self) -> Result<f64> {
        to_bpf(self.elbo(), self.frames())
    }

    pub fn recon_bpf(&self) -> Result<f64> {
        to_bpf(self.recon(), self.frames())
    }

    /// KL cost per layer in bits per frame (positive).
    pub fn kl_bpf(&self) -> Result<Vec<f64>> {
        let f = self.frames();
        ensure!(f > 0, "cannot convert to bits per frame with zero frames");
        Ok(self.kl().iter().map(|k| k / LN_2 / f as f64).collect())
    }

    /// `id,frames,recon_nats,kl_nats_l1..,bpf` rows.
    pub fn to_csv(&self) -> Result<String> {
        let layers = self.kl().len();
        let mut out = String::from("id,frames,recon_nats");
        for l in 1..=layers {
            out.push_str(&format!(",kl_nats_l{l}"));
        }
        out.push_str(",bpf\n");
        for e in &self.examples {
            out.push_str(&format!("{},{},{:e}", e.id, e.frames, e.recon));
            for l in 0..layers {
                out.push_str(&format!(",{:e}", e.kl.get(l).copied().unwrap_or(0.0)));
            }
            out.push_str(&format!(",{:e}\n", e.bpf()?));
        }
        Ok(out)
    }

    /// Inverse of [`MetricsRecord::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty metrics csv".into()))?;
        let cols = header.split(',').count();
        ensure!(cols >= 4, "metrics csv header too short");
        let layers = cols - 4;
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}")));
        let mut examples = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols {
                return Err(Error::Format(format!("expected {cols} fields, got {}", f.len())));
            }
            examples.push(ExampleMetrics {
                id: f[0].to_string(),
                frames: f[1].parse().map_err(|e| Error::Format(format!("bad frame count: {e}")))?,
                recon: num(f[2])?,
                kl: f[3..3 + layers].iter().map(|s| num(s)).collect::<Result<_>>()?,
            });
        }
        Ok(Self { examples })
    }
}

/// `(start, count_from, end)` windows covering `steps` steps.
pub fn segment_windows(model: &dyn SequenceModel, steps: usize, seg: SegmentConfig) -> Result<Vec<(usize, usize, usize)>> {
    let Some(len) = seg.steps else {
        return Ok(vec![(0, 0, steps)]);
    };
    ensure!(len >= 1, "segment length must be >= 1");
    let multiple = model.step_multiple();
    ensure!(len % multiple == 0, "segment length {len} is not a multiple of {multiple} steps");
    let overlap = model.receptive_field().map_or(0, |rf| rf - 1);
    ensure!(len >= overlap, "segment of {len} steps is shorter than the {overlap}-step overlap");
    Ok((0..steps)
        .step_by(len)
        .map(|b| (b.saturating_sub(overlap), b, (b + len).min(steps)))
        .collect())
}

/// ELBO terms of one sequence evaluated segment by segment. Stateful models
/// carry their state across boundaries; stateless models re-read
/// `receptive_field - 1` steps of context.
pub fn evaluate_sequence(model: &dyn SequenceModel, seq: &EncodedSequence, seg: SegmentConfig, noise: &Noise) -> Result<ElboTerms> {
    let x = seq.stack(model.config().stack)?;
    ensure!(
        seq.bit_depth == model.config().bit_depth,
        "sequence {} has bit depth {} but the model expects {}",
        seq.id,
        seq.bit_depth,
        model.config().bit_depth
    );
    let wins = segment_windows(model, valid_steps(&x), seg)?;
    let bounds: Vec<(usize, usize)> = wins.iter().map(|&(_, c, e)| (c, e)).collect();
    let look = model.lookahead(&x, &bounds)?;
    let mut carry = Carry::default();
    let mut total = ElboTerms::default();
    for (&(s, c, e), a) in wins.iter().zip(&look) {
        let mut win = Window::new(&x, s, c, e)?;
        win.lookahead = a.as_ref();
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let (g, next) = model.forward(&mut tape, &p, &win, &carry, noise, None)?;
        total.accumulate(&g.terms(&tape));
        carry = next;
    }
    Ok(total)
}

/// Worker threads for evaluation: `SLVM_THREADS` when set, else all cores.
pub fn worker_threads() -> Result<usize> {
    match std::env::var("SLVM_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("SLVM_THREADS={v:?} is not a count")))?;
            ensure!(n >= 1, "SLVM_THREADS must be >= 1");
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Noise stream used for example `index` of an evaluation seeded with `seed`.
pub fn example_noise(seed: u64, index: usize) -> Noise {
    Noise::seeded(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Evaluates every sequence, sharded across workers. Results do not depend
/// on the number of workers.
pub fn evaluate(model: &dyn SequenceModel, data: &[EncodedSequence], seg: SegmentConfig, seed: u64) -> Result<MetricsRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads()?)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let examples = pool.install(|| {
        data.par_iter()
            .enumerate()
            .map(|(i, seq)| {
                let t = evaluate_sequence(model, seq, seg, &example_noise(seed, i))?;
                Ok(ExampleMetrics {
                    id: seq.id.clone(),
                    frames: t.frames,
                    recon: t.recon,
                    kl: t.kl,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(MetricsRecord { examples })
}
