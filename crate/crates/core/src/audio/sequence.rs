use std::path::Path;

use super::codec::{self, Encoding};
use super::wav::{read_wav, Wav};
use crate::error::{ensure, Result};
use crate::numcore::Tensor;

/// A quantized waveform plus the metadata needed for likelihood accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub id: String,
    /// Model-domain values on the `bit_depth` grid.
    pub values: Vec<f64>,
    pub bit_depth: u32,
    pub encoding: Encoding,
    pub sample_rate: u32,
    /// Per-frame class ids, same length as `values` when present.
    pub labels: Option<Vec<u32>>,
}

impl EncodedSequence {
    /// Encodes and quantizes linear amplitudes in `[-1, 1]`.
    pub fn from_linear(
        id: impl Into<String>,
        linear: &[f64],
        encoding: Encoding,
        bit_depth: u32,
        sample_rate: u32,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        ensure!((1..=24).contains(&bit_depth), "bit depth {bit_depth} unsupported");
        if let Some(l) = &labels {
            ensure!(l.len() == linear.len(), "labels have length {} but sequence has {}", l.len(), linear.len());
        }
        let values = linear
            .iter()
            .map(|&x| codec::encode(x, encoding, bit_depth))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: id.into(),
            values,
            bit_depth,
            encoding,
            sample_rate,
            labels,
        })
    }

    pub fn from_wav(id: impl Into<String>, wav: &Wav, encoding: Encoding, bit_depth: u32) -> Result<Self> {
        Self::from_linear(id, &wav.to_unit(), encoding, bit_depth, wav.sample_rate, None)
    }

    pub fn load_wav(path: impl AsRef<Path>, encoding: Encoding, bit_depth: u32) -> Result<Self> {
        let path = path.as_ref();
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_wav(id, &read_wav(path)?, encoding, bit_depth)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Decodes back to linear amplitude.
    pub fn to_linear(&self) -> Result<Vec<f64>> {
        self.values.iter().map(|&y| codec::decode(y, self.encoding)).collect()
    }

    pub fn to_wav(&self) -> Result<Wav> {
        Ok(Wav::from_unit(self.sample_rate, &self.to_linear()?))
    }

    pub fn stack(&self, s: usize) -> Result<StackedSequence> {
        stack(&self.values, s)
    }

    /// Frames `[start, end)` as a new sequence (labels sliced alongside).
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            id: format!("{}[{start}..{end}]", self.id),
            values: self.values[start..end].to_vec(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
            ..self.clone()
        }
    }
}

/// Frames grouped `s` at a time into model timesteps.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedSequence {
    /// `[ceil(T / s), s]`; the final row is zero padded.
    pub steps: Tensor,
    pub stack_size: usize,
    /// True waveform length `T` before padding.
    pub total_frames: usize,
}

impl StackedSequence {
    pub fn num_steps(&self) -> usize {
        self.steps.shape()[0]
    }

    /// Frames of step `t` that are real (not padding).
    pub fn valid_in_step(&self, t: usize) -> usize {
        let start = t * self.stack_size;
        self.total_frames.saturating_sub(start).min(self.stack_size)
    }

    /// Per-frame mask, `[steps, s]` row-major, 1 for real frames.
    pub fn frame_mask(&self) -> Vec<f64> {
        let n = self.num_steps() * self.stack_size;
        (0..n).map(|i| if i < self.total_frames { 1.0 } else { 0.0 }).collect()
    }

    pub fn step(&self, t: usize) -> &[f64] {
        self.steps.row_slice(t)
    }

    pub fn unstack(&self) -> Vec<f64> {
        self.steps.data()[..self.total_frames].to_vec()
    }

    /// Steps `[start, end)` as a standalone sequence.
    pub fn window(&self, start: usize, end: usize) -> StackedSequence {
        let s = self.stack_size;
        let data = self.steps.data()[start * s..end * s].to_vec();
        let total = self.total_frames.saturating_sub(start * s).min((end - start) * s);
        StackedSequence {
            steps: Tensor::new(vec![end - start, s], data).expect("window shape"),
            stack_size: s,
            total_frames: total,
        }
    }
}

pub fn stack(frames: &[f64], s: usize) -> Result<StackedSequence> {
    ensure!(s >= 1, "stack size must be >= 1");
    ensure!(!frames.is_empty(), "cannot stack an empty sequence");
    let steps = frames.len().div_ceil(s);
    let mut data = frames.to_vec();
    data.resize(steps * s, 0.0);
    Ok(StackedSequence {
        steps: Tensor::new(vec![steps, s], data)?,
        stack_size: s,
        total_frames: frames.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stack_counts() {
        let frames: Vec<f64> = (0..8).map(|i| i as f64 / 10.0).collect();
        let st = stack(&frames, 4).unwrap();
        assert_eq!(st.num_steps(), 2);
        assert_eq!(st.stack_size, 4);
        assert_eq!(st.total_frames, 8);
    }

    #[test]
    fn partial_final_step_is_padded_and_masked() {
        let st = stack(&[0.1, 0.2, 0.3, 0.4, 0.5], 4).unwrap();
        assert_eq!(st.num_steps(), 2);
        assert_eq!(st.step(1), &[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(st.frame_mask().iter().sum::<f64>(), 5.0);
        assert_eq!(st.valid_in_step(1), 1);
        assert_eq!(st.unstack(), vec![0.1, 0.2, 0.3, 0.4, 0.5]);
    }

    #[test]
    fn labels_must_match_length() {
        let r = EncodedSequence::from_linear("x", &[0.0, 0.1], Encoding::Linear, 8, 16000, Some(vec![0]));
        assert!(r.is_err());
    }

    #[test]
    fn values_land_on_grid() {
        let lin: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 0.9).collect();
        for enc in [Encoding::Linear, Encoding::MuLaw] {
            let seq = EncodedSequence::from_linear("x", &lin, enc, 16, 16000, None).unwrap();
            assert!(seq.values.iter().all(|&v| codec::on_grid(v, 16)));
        }
    }

    proptest! {
        #[test]
        fn stack_unstack_identity(steps in 1usize..20, s in 1usize..9) {
            let frames: Vec<f64> = (0..steps * s).map(|i| (i as f64).cos()).collect();
            let st = stack(&frames, s).unwrap();
            prop_assert_eq!(st.num_steps(), steps);
            prop_assert_eq!(st.unstack(), frames);
        }
    }
}
