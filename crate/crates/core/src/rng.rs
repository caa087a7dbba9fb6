//! Seeded random streams.
//!
//! Every consumer (environment, exploration noise, minibatch sampling,
//! weight init) owns its own ChaCha stream derived from one run seed, so the
//! streams stay independent of how often the others are drawn.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::real::Real;

/// Stream identifiers used by the trainer and the environment.
pub mod stream {
    pub const ENV: u64 = 1;
    pub const EXPLORATION: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const INIT: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const UPDATE: u64 = 6;
}

#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    /// A stream keyed by `(seed, stream, index)`, e.g. one per evaluation episode.
    pub fn indexed(seed: u64, stream: u64, index: u64) -> Self {
        let mixed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        Self::new(mixed, stream)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal draw by the Box-Muller transform; the second variate
    /// of each pair is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn gaussian<T: Real>(&mut self, sigma: T) -> T {
        if sigma == T::zero() {
            // Keep the stream position independent of which sigmas are zero.
            let _ = self.standard_normal();
            return T::zero();
        }
        T::lit(self.standard_normal()) * sigma
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
