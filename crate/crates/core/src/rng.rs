//! Seeded, platform-independent random number generation.
//!
//! Every stochastic routine in the crate draws from [`SplitMix64`], a 64-bit
//! state generator whose output depends only on integer arithmetic. Parallel or
//! per-item streams are derived with [`derive_seed`], so item `i` of a dataset
//! is a pure function of `(seed, i)`.

use rand::{RngCore, SeedableRng};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The SplitMix64 output mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed for stream `stream`, item `index`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let a = mix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(stream.wrapping_add(1))));
    mix64(a ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Well-known stream identifiers, kept in one place so streams never collide.
pub mod stream {
    pub const DATASET_ITEM: u64 = 1;
    pub const ORBIT_ITEM: u64 = 2;
    pub const NETWORK_INIT: u64 = 3;
    pub const TRAIN_SHUFFLE: u64 = 4;
    pub const PROBE_SPLIT: u64 = 5;
    pub const CONVEXITY_PAIRS: u64 = 6;
    pub const TOPO_SUBSAMPLE: u64 = 7;
    pub const PCA_START: u64 = 8;
    pub const MANIFOLD: u64 = 9;
    pub const LABEL_TABLE: u64 = 10;
    pub const POSITIVE_PICK: u64 = 11;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator for item `index` of stream `stream` under `seed`.
    pub fn for_item(seed: u64, stream: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, stream, index))
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
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

/// Fisher-Yates shuffle with a fixed draw order.
pub fn shuffle<T>(items: &mut [T], rng: &mut SplitMix64) {
    use rand::Rng;
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
