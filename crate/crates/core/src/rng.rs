//! Deterministic, splittable seed derivation.
//!
//! Every stochastic stage in the workbench draws from a `ChaCha8Rng`
//! whose seed is derived from a master seed plus a path of integers
//! (frame index, stage id, epoch, ...). Because each consumer gets its
//! own independently-seeded generator, frames can be produced in any
//! order — or on any number of threads — without changing a single bit
//! of the output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers used as the final path element when deriving
/// per-stage seeds. Keeping them in one place avoids accidental reuse.
pub mod stream {
    /// Payload bits for a modulator.
    pub const BITS: u64 = 0x01;
    /// Crop offset when trimming shaped output to one frame.
    pub const CROP: u64 = 0x02;
    /// Sample-rate-offset walk.
    pub const SRO: u64 = 0x03;
    /// Fading path phases and Doppler angles.
    pub const FADING: u64 = 0x04;
    /// Carrier-frequency-offset walk and initial phase.
    pub const CFO: u64 = 0x05;
    /// Additive noise.
    pub const NOISE: u64 = 0x06;
    /// Layer weight initialization.
    pub const INIT: u64 = 0x07;
    /// Epoch shuffling during training.
    pub const SHUFFLE: u64 = 0x08;
    /// Stratified dataset splitting.
    pub const SPLIT: u64 = 0x09;
    /// Whole-frame channel application (parent of SRO/FADING/CFO/NOISE).
    pub const CHANNEL: u64 = 0x0a;
}

/// One round of the SplitMix64 output mix. Full 64-bit avalanche, so
/// nearby inputs (frame 17, frame 18) land on unrelated seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path of integers.
///
/// The derivation is order-sensitive: `[a, b]` and `[b, a]` give
/// unrelated seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0xd1b5_4a32_d192_ed03);
    for &part in path {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}

/// A generator seeded directly from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generator for the child stream at `master / path...`.
pub fn derived_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    seeded_rng(derive_seed(master, path))
}
