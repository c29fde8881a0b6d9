//! Reproducible minibatch sampling.
//!
//! The draw at iteration `counter` comes from a ChaCha8 generator seeded with
//! `seed` and positioned on stream `counter`, so batches depend only on
//! `(seed, counter)` and not on how many draws came before.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatchSampler {
    pub n: usize,
    pub fraction: f64,
    pub seed: u64,
    pub counter: u64,
}

impl MiniBatchSampler {
    pub fn new(n: usize, fraction: f64, seed: u64) -> Self {
        Self {
            n,
            fraction,
            seed,
            counter: 0,
        }
    }

    /// `⌈fraction·n⌉`, at least one and at most `n`.
    pub fn batch_size(&self) -> usize {
        ((self.fraction * self.n as f64).ceil() as usize).clamp(1.min(self.n), self.n)
    }

    /// Batch for the current counter, in ascending order. Does not advance.
    pub fn batch_at(&self, counter: u64) -> Vec<usize> {
        let k = self.batch_size();
        if k == self.n {
            return (0..self.n).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(counter);
        let mut b = index::sample(&mut rng, self.n, k).into_vec();
        b.sort_unstable();
        b
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let b = self.batch_at(self.counter);
        self.counter += 1;
        b
    }
}

/// Convenience form of [`MiniBatchSampler::batch_at`].
pub fn sample_batch(n: usize, fraction: f64, seed: u64, counter: u64) -> Vec<usize> {
    MiniBatchSampler::new(n, fraction, seed).batch_at(counter)
}
