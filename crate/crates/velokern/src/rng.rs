//! Seeded random number generation.
//!
//! All stochastic steps in the crate (excitation signals, measurement noise,
//! validation-split shuffles, randomized property checks) draw from
//! [`SeededRng`], a thin wrapper around the ChaCha12 stream cipher. The
//! uniform and Gaussian transforms below are spelled out explicitly so that
//! a given seed reproduces the same sequence on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub struct SeededRng {
    inner: ChaCha12Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Uniform sample in `[0, 1)` using the top 53 bits of one ChaCha word.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.inner.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform sample in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard Gaussian sample via the Box-Muller transform.
    ///
    /// Two uniforms are consumed per sample and only the cosine branch is
    /// kept; this wastes half a draw but keeps the stream position a simple
    /// function of the number of samples requested.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Vector of standard Gaussian samples.
    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let x = (self.uniform() * n as f64) as usize;
        x.min(n - 1)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
