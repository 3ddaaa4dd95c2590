//! Prompt-scoped random streams.
//!
//! A stream is keyed by `(master seed, label)` rather than by position, so
//! reordering prompts or fanning work out across threads never changes what
//! any single prompt sees. The key derivation is
//!
//! ```text
//! stream_seed = splitmix64(master_seed ^ fnv1a64(label))
//! ```
//!
//! and the generator is ChaCha8 seeded from that 64-bit value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the UTF-8 bytes of `label`.
pub fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(master_seed: u64, label: &str) -> u64 {
    splitmix64(master_seed ^ fnv1a64(label))
}

pub fn prompt_stream(master_seed: u64, prompt_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master_seed, prompt_id))
}

/// Stream for the `index`-th trial of an experiment.
pub fn trial_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(master_seed) ^ index))
}
