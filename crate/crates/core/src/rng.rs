//! Seeded random streams for reproducible simulation.
//!
//! Every (seed, domain, index, repetition) tuple gets its own xoshiro256**
//! generator. The 64-bit stream key is built by chaining SplitMix64 over the
//! tuple, and the generator state is expanded from it with SplitMix64 (the
//! published seeding procedure for the xoshiro family). Gaussian deviates use
//! the Box-Muller transform with `libm` so values do not depend on the
//! platform's math library.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub(crate) const DOMAIN_ENCRYPT: u64 = 0x454E_4352;
pub(crate) const DOMAIN_IDLE: u64 = 0x4944_4C45;
pub(crate) const DOMAIN_TRIAL: u64 = 0x5452_4941;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream key from a seed and a path of indices.
pub fn stream_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p)))
}

pub struct Stream {
    rng: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        Self {
            rng: Xoshiro256StarStar::seed_from_u64(stream_key(seed, path)),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform integer in `[-max, max]`.
    pub fn symmetric(&mut self, max: usize) -> isize {
        self.below(2 * max as u64 + 1) as isize - max as isize
    }

    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }
}
