//! Counter-based random streams.
//!
//! Every ray draws from its own ChaCha8 stream positioned by
//! `(seed, source index, ray index)`, so the numbers a ray sees do not depend
//! on how work is split across threads or in which order rays are traced.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// 32-bit words reserved per ray inside a source's stream.
const WORDS_PER_RAY: u128 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub source: u64,
    pub ray: u64,
}

impl StreamKey {
    pub fn new(seed: u64, source: u64, ray: u64) -> Self {
        Self { seed, source, ray }
    }

    pub fn stream(&self) -> RayStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.source);
        rng.set_word_pos(self.ray as u128 * WORDS_PER_RAY);
        RayStream { rng }
    }
}

pub struct RayStream {
    rng: ChaCha8Rng,
}

impl RayStream {
    /// Uniform sample in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
