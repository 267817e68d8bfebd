//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by a
//! `(seed, index)` pair, so results never depend on thread scheduling or on
//! the order in which links and trajectories are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for `index` under `seed`.
///
/// The seed keys the ChaCha state and the index selects the 64-bit stream,
/// so distinct indices never overlap.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed (e.g. one per trajectory) from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
