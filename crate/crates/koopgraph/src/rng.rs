//! Seeded randomness with named streams.
//!
//! Every run draws all randomness from one `u64` seed. Each consumer asks
//! for a stream by name ("sbm", "init", "dropout", "negsample", ...), which
//! maps to an independent ChaCha stream. Adding a new consumer never
//! perturbs the draws seen by existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit FNV-1a; avoids `DefaultHasher`, whose output is not
/// guaranteed stable across releases.
fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG for the named stream of the given run seed.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}
