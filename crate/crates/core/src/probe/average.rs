use crate::audio::StackedSequence;
use crate::error::{ensure, Error, Result};
use crate::models::{infer, LatentLayer, Noise, SequenceModel};

/// A representation on a regular grid: row `i` covers frames
/// `[i * frames_per_row, (i + 1) * frames_per_row)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RepSequence {
    pub rows: Vec<Vec<f64>>,
    pub frames_per_row: usize,
}

impl RepSequence {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Frames covered by the grid.
    pub fn frames(&self) -> usize {
        self.rows.len() * self.frames_per_row
    }

    pub fn row_at_frame(&self, frame: usize) -> &[f64] {
        &self.rows[frame / self.frames_per_row]
    }
}

/// One layer of a trajectory on the waveform frame clock. Posterior samples
/// for stochastic layers, states for deterministic ones.
pub fn layer_representation(layer: &LatentLayer, stack: usize) -> RepSequence {
    RepSequence {
        rows: if layer.stochastic { layer.samples.clone() } else { layer.means.clone() },
        frames_per_row: layer.stride * stack,
    }
}

/// `n` posterior draws of one layer (a single pass for deterministic
/// layers), each from its own noise stream.
pub fn resample_representation(
    model: &dyn SequenceModel,
    x: &StackedSequence,
    layer: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<RepSequence>> {
    ensure!(n >= 1, "n_resample must be >= 1");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let traj = infer(model, x, &Noise::seeded(seed.wrapping_add(i as u64)))?;
        let l = traj.layer(layer).ok_or_else(|| Error::Contract(format!("model has no layer {layer:?}")))?;
        out.push(layer_representation(l, traj.stack));
        if !l.stochastic {
            break;
        }
    }
    Ok(out)
}

/// Mean representation of one labeled span.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanMean {
    pub start: usize,
    pub end: usize,
    pub class: u32,
    pub mean: Vec<f64>,
}

/// Averages each span `[start, end)` (frames) over the draws and over its
/// frames. Empty spans are skipped with a warning.
pub fn segment_average(draws: &[RepSequence], spans: &[(usize, usize, u32)]) -> Result<Vec<SpanMean>> {
    ensure!(!draws.is_empty(), "need at least one representation draw");
    let d = draws[0].dim();
    let covered = draws.iter().map(RepSequence::frames).min().unwrap_or(0);
    ensure!(draws.iter().all(|r| r.dim() == d && r.frames_per_row >= 1), "draws disagree in shape");
    let mut out = Vec::with_capacity(spans.len());
    for &(start, end, class) in spans {
        if start >= end {
            eprintln!("warning: skipping empty span [{start}, {end}) of class {class}");
            continue;
        }
        ensure!(end <= covered, "span [{start}, {end}) runs past the {covered} frames represented");
        let mut mean = vec![0.0; d];
        for r in draws {
            for f in start..end {
                for (m, v) in mean.iter_mut().zip(r.row_at_frame(f)) {
                    *m += v;
                }
            }
        }
        let k = (draws.len() * (end - start)) as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        out.push(SpanMean { start, end, class, mean });
    }
    Ok(out)
}
