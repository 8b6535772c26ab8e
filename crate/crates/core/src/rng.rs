//! Seeded random streams.
//!
//! A run owns one root seed. Every consumer (network init, environment
//! resets, exploration noise, minibatch sampling, evaluation) draws from its
//! own ChaCha stream keyed by a fixed label, so adding draws in one consumer
//! never shifts the numbers another consumer sees.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Named sub-streams derived from a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Env,
    Noise,
    Sample,
    Eval,
    Her,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Env => 2,
            Stream::Noise => 3,
            Stream::Sample => 4,
            Stream::Eval => 5,
            Stream::Her => 6,
        }
    }
}

/// Counter-based deterministic generator.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sub-stream of `seed` for one consumer.
    pub fn stream(seed: u64, stream: Stream) -> Self {
        Self::with_stream(seed, stream.id())
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Draw from N(mean, std²). `std == 0` returns `mean` without consuming state.
    pub fn gaussian(&mut self, mean: f64, std: f64) -> f64 {
        debug_assert!(std >= 0.0);
        if std == 0.0 {
            return mean;
        }
        Normal::new(mean, std)
            .expect("std must be finite and non-negative")
            .sample(&mut self.inner)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
