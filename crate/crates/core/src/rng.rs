//! Seeded pseudo-random streams.
//!
//! Every random draw in the crate goes through [`SeedStream`], a thin wrapper
//! around the SplitMix64 generator (Steele, Lea & Flood, 2014). The exact
//! algorithm is fixed so results can be replayed by hand:
//!
//! ```text
//! state  <- state + 0x9E3779B97F4A7C15
//! z      <- state
//! z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output <- z ^ (z >> 31)
//! ```
//!
//! (all arithmetic wrapping mod 2^64, the initial state is the seed).
//!
//! * `index(n)` maps one output `x` to `floor(x * n / 2^64)` (multiply-shift).
//! * `uniform()` maps one output `x` to `(x >> 11) * 2^-53` in `[0, 1)`.
//! * `split(stream)` derives an independent child seed as the first output of
//!   a fresh generator seeded with `seed ^ (stream * 0xD1B54A32D192ED03)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct SeedStream {
    seed: u64,
    rng: SplitMix64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child seed for an independent sub-stream.
    pub fn split(seed: u64, stream: u64) -> u64 {
        let mixed = seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
        SplitMix64::seed_from_u64(mixed).next_u64()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Index in `0..n` by multiply-shift. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Mutable access for `rand_distr` samplers.
    pub fn rng(&mut self) -> &mut SplitMix64 {
        &mut self.rng
    }
}
