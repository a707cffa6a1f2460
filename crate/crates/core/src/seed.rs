//! Seed derivation and the pipeline's portable PRNG.
//!
//! Every random decision in the pipeline draws from [`SplitMix64`], seeded
//! through [`derive_seed`]. A stage seed is the global seed mixed with the
//! FNV-1a hash of the stage name; keyed draws (per stay, channel, hour) mix
//! further integer parts on top. Nothing depends on iteration order, so
//! stages can be re-run independently and stays can be processed in any
//! order.
//!
//! SplitMix64 (Steele, Lea & Flood 2014) is a 64-bit generator with a
//! one-line state update; it is trivial to reimplement bit-exactly in any
//! language, which keeps split assignments portable.

use rand_core::{impls, RngCore, SeedableRng};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed for a named stage, optionally keyed by integer parts.
///
/// `derive_seed(s, "featurize", &[stay, channel, hour])` is a pure function
/// of its arguments.
pub fn derive_seed(global: u64, stage: &str, parts: &[u64]) -> u64 {
    let mut h = mix64(global ^ fnv1a(stage.as_bytes()));
    for &p in parts {
        h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ p);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn keyed(global: u64, stage: &str, parts: &[u64]) -> Self {
        Self::new(derive_seed(global, stage, parts))
    }

    #[inline]
    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index in `0..n` by modulo reduction. The bias is below 2^-40 for any
    /// `n` this crate uses and the simple rule is easy to port.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        (self.next() % n as u64) as usize
    }

    /// Durstenfeld shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }
}

impl SeedableRng for SplitMix64 {
    type Seed = [u8; 8];

    fn from_seed(seed: Self::Seed) -> Self {
        Self::new(u64::from_le_bytes(seed))
    }

    fn seed_from_u64(state: u64) -> Self {
        Self::new(state)
    }
}
