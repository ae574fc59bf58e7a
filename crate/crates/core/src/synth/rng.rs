//! Documented random streams.
//!
//! Every random draw in the engine goes through [`StreamRng`] so that streams
//! can be reproduced bit-for-bit from any language:
//!
//! * generator: xoshiro256** seeded with SplitMix64 expansion of a `u64` seed
//!   (the reference seeding procedure published with xoshiro);
//! * uniform `f64`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! * standard normal: Box–Muller, `sqrt(-2 ln(1 - u1)) * cos(2π u2)` using two
//!   consecutive uniforms; the sine branch is discarded;
//! * shuffles: Fisher–Yates from the last index down, `j = floor(u * (i + 1))`;
//! * derived streams: `seed' = splitmix64(seed ^ splitmix64(index + 1))`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

/// One step of SplitMix64 applied to `x` as the state.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: Xoshiro256StarStar,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: Xoshiro256StarStar::seed_from_u64(seed) }
    }

    /// Independent child stream for task `index` (fold, permutation, subject...).
    pub fn derived(seed: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform index in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let j = (self.uniform() * bound as f64) as usize;
        j.min(bound - 1)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
