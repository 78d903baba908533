//! Deterministic random sampling.
//!
//! The generator is ChaCha8 keyed by a 64-bit seed; Gaussian draws use the
//! Box-Muller transform on top of it. Both are fixed algorithms with stable
//! output across platforms and releases, so a seed fully determines every
//! sample stream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random source shared by every stochastic operation in the crate.
pub struct Rng {
    inner: ChaCha8Rng,
    spare_gaussian: Option<f64>,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed), spare_gaussian: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in the half-open interval (0, 1].
    ///
    /// Uses the top 53 bits of a 64-bit word, shifted to exclude zero so the
    /// value is always a valid Box-Muller radius argument.
    pub fn next_f64(&mut self) -> f64 {
        (((self.inner.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal draw via Box-Muller; the second value of each pair is
    /// cached so consecutive draws consume uniforms two at a time.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Bernoulli draw with success probability `p`.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() <= p
    }
}

/// Derives a child seed from a base seed, a stream tag, and an index, using
/// a splitmix64 finalizer. Child streams are independent enough that trials
/// can be evaluated in any order (or in parallel) with identical results.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
