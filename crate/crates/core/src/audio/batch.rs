use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{ensure, Result};

/// A group of sequences of similar length, padded to the longest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Indices into the dataset.
    pub indices: Vec<usize>,
    pub lengths: Vec<usize>,
    pub padded_len: usize,
}

impl Batch {
    /// Per-member frame mask of length `padded_len`.
    pub fn mask(&self, member: usize) -> Vec<bool> {
        (0..self.padded_len).map(|t| t < self.lengths[member]).collect()
    }

    pub fn real_frames(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn padded_frames(&self) -> usize {
        self.padded_len * self.indices.len() - self.real_frames()
    }

    /// Zero-pads every member's frames to `padded_len`.
    pub fn pad<'a>(&self, frames: impl Fn(usize) -> &'a [f64]) -> Vec<Vec<f64>> {
        self.indices
            .iter()
            .map(|&i| {
                let mut v = frames(i).to_vec();
                v.resize(self.padded_len, 0.0);
                v
            })
            .collect()
    }
}

/// Sorts by length and cuts consecutive runs of `batch_size`, so each batch
/// holds sequences of approximately equal length.
pub fn make_batches(lengths: &[usize], batch_size: usize) -> Result<Vec<Batch>> {
    ensure!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let lens: Vec<usize> = chunk.iter().map(|&i| lengths[i]).collect();
            Batch {
                indices: chunk.to_vec(),
                padded_len: lens.iter().copied().max().unwrap_or(0),
                lengths: lens,
            }
        })
        .collect())
}

/// [`make_batches`] with the batch order shuffled.
pub fn shuffled_batches(lengths: &[usize], batch_size: usize, rng: &mut impl Rng) -> Result<Vec<Batch>> {
    let mut batches = make_batches(lengths, batch_size)?;
    batches.shuffle(rng);
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn buckets_by_sorted_length() {
        let b = make_batches(&[100, 10, 11], 2).unwrap();
        assert_eq!(b.len(), 2);
        let mut first = b[0].lengths.clone();
        first.sort();
        assert_eq!(first, vec![10, 11]);
        assert_eq!(b[1].lengths, vec![100]);
        assert_eq!(b[0].padded_len, 11);
    }

    #[test]
    fn equal_lengths_have_no_padding() {
        let b = make_batches(&[7; 9], 4).unwrap();
        assert!(b.iter().all(|x| x.padded_frames() == 0));
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(make_batches(&[1, 2], 0).is_err());
    }

    #[test]
    fn pad_zero_fills() {
        let data = [vec![0.5, 0.5, 0.5], vec![0.25]];
        let b = make_batches(&[3, 1], 2).unwrap();
        let padded = b[0].pad(|i| &data[i]);
        assert!(padded.iter().all(|p| p.len() == 3));
        assert_eq!(b[0].mask(0), vec![true, false, false]);
    }

    proptest! {
        #[test]
        fn every_sequence_once_and_mask_conserves_frames(lengths in prop::collection::vec(1usize..500, 1..40), bs in 1usize..8) {
            let batches = make_batches(&lengths, bs).unwrap();
            let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
            seen.sort();
            prop_assert_eq!(seen, (0..lengths.len()).collect::<Vec<_>>());
            let mask_total: usize = batches
                .iter()
                .map(|b| (0..b.indices.len()).map(|m| b.mask(m).iter().filter(|x| **x).count()).sum::<usize>())
                .sum();
            prop_assert_eq!(mask_total, lengths.iter().sum::<usize>());
        }
    }
}
