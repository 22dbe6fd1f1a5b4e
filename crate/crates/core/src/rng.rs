//! Seeded pseudo-random stream used everywhere randomness is needed.
//!
//! The generator is SplitMix64 (state += 0x9e3779b97f4a7c15, then the
//! standard two-multiply finalizer), seeded by using the seed as the initial
//! state. Derived draws are defined on top of the raw `u64` stream so other
//! implementations can reproduce them:
//!
//! * `unit()` = `(x >> 11) * 2^-53`, in `[0, 1)`
//! * `below(n)` = high 64 bits of the 128-bit product `x * n`
//! * `uniform(lo, hi)` = `lo + (hi - lo) * unit()`

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Clone, Debug)]
pub struct Rng {
    inner: SplitMix64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Independent stream for a named purpose, so adding draws in one place
    /// does not shift every other stream.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut mixer = Rng::new(seed ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
        Rng::new(mixer.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    /// Fisher-Yates, drawing `below(i + 1)` for i from the end.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
