//! Seeded Wiener increments.
//!
//! Every trajectory draws from its own ChaCha20 stream selected by
//! `stream_index`, so a `(seed, stream_index)` pair fixes the sequence
//! regardless of which thread runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Identifies one reproducible noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSource {
    pub seed: u64,
    pub stream_index: u64,
}

impl NoiseSource {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        NoiseSource { seed, stream_index }
    }

    /// Gaussian increments of variance `dt`.
    pub fn increments(&self) -> GaussianIncrements {
        GaussianIncrements {
            rng: self.rng(),
        }
    }

    /// The underlying generator, for consumers that need other variates.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// A supply of Wiener increments `dW`.
pub trait Increments {
    /// Next increment for a step of length `dt`.
    fn next_increment(&mut self, dt: f64) -> f64;
}

#[derive(Debug, Clone)]
pub struct GaussianIncrements {
    rng: ChaCha20Rng,
}

impl Increments for GaussianIncrements {
    fn next_increment(&mut self, dt: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * dt.sqrt()
    }
}

/// Always zero: turns the stochastic integrators deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroIncrements;

impl Increments for ZeroIncrements {
    fn next_increment(&mut self, _dt: f64) -> f64 {
        0.0
    }
}

/// Replays a fixed list of increments, then zeros.
#[derive(Debug, Clone)]
pub struct ScriptedIncrements {
    values: Vec<f64>,
    next: usize,
}

impl ScriptedIncrements {
    pub fn new(values: Vec<f64>) -> Self {
        ScriptedIncrements { values, next: 0 }
    }
}

impl Increments for ScriptedIncrements {
    fn next_increment(&mut self, _dt: f64) -> f64 {
        let v = self.values.get(self.next).copied().unwrap_or(0.0);
        self.next += 1;
        v
    }
}

impl<T: Increments + ?Sized> Increments for &mut T {
    fn next_increment(&mut self, dt: f64) -> f64 {
        (**self).next_increment(dt)
    }
}
