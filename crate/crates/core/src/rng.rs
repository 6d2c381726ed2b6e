//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic quantity in a run is drawn from a stream keyed by the
//! run seed plus a path of integers (replicate, EV index, mask index, ...),
//! so results do not depend on thread scheduling or on how many other
//! streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and a key path into a single 64-bit value.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// A ChaCha8 stream for `(seed, path...)`.
pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}

/// A single uniform in `[0, 1)` keyed by `(seed, path...)`; used where one
/// draw per key is needed and constructing a full stream would be wasteful.
pub fn keyed_uniform(seed: u64, path: &[u64]) -> f64 {
    (derive_seed(seed, path) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stable 64-bit FNV-1a hash for string keys (charge-point ids).
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
