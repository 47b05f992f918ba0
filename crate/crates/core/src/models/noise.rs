use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numcore::Tensor;

/// Reparameterization noise addressed by `(layer, global latent index)`.
///
/// Each address owns its own ChaCha stream, so a window evaluated on its own
/// draws exactly the noise it would see inside the full sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    seed: u64,
    zero: bool,
    resampled: Option<(usize, u64)>,
}

impl Noise {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            zero: false,
            resampled: None,
        }
    }

    /// All-zero noise: latents equal posterior means.
    pub fn zero() -> Self {
        Self {
            seed: 0,
            zero: true,
            resampled: None,
        }
    }

    /// Same draws except at latent index `index`, which uses `seed` instead.
    pub fn with_resampled(mut self, index: usize, seed: u64) -> Self {
        self.resampled = Some((index, seed));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn draw(&self, layer: usize, index: usize, dim: usize) -> Vec<f64> {
        if self.zero {
            return vec![0.0; dim];
        }
        let seed = match self.resampled {
            Some((i, s)) if i == index => s,
            _ => self.seed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((layer as u64) << 48) ^ index as u64);
        (0..dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn row(&self, layer: usize, index: usize, dim: usize) -> Tensor {
        Tensor::row(self.draw(layer, index, dim))
    }

    /// `[n, dim]` draws for indices `first .. first + n`.
    pub fn rows(&self, layer: usize, first: usize, n: usize, dim: usize) -> Tensor {
        let data = (first..first + n).flat_map(|i| self.draw(layer, i, dim)).collect();
        Tensor::matrix(n, dim, data).expect("noise shape")
    }
}
