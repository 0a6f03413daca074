//! Seeded RNG plumbing.
//!
//! Every stochastic entry point takes an explicit seed and builds a ChaCha8
//! generator, so runs are reproducible across platforms. Replicate studies
//! derive one independent stream per (scenario, replicate, purpose) from the
//! master seed, which makes results independent of thread scheduling.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 step: the standard 64-bit finalizer-based generator.
fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a path of stream indices.
/// Deterministic, order-sensitive, and well-spread even for small indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    splitmix64(&mut state);
    let mut out = mix(state);
    for &p in path {
        state = out ^ p.wrapping_mul(0xD605_1C1A_73F5_7DB1).wrapping_add(0x1F12_3BB5);
        splitmix64(&mut state);
        out = mix(state);
    }
    out
}
