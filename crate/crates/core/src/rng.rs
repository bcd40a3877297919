//! Counter-based random streams.
//!
//! Every random draw in the library comes from a stream keyed by
//! `(master seed, purpose, coordinates...)`. Streams are independent of
//! evaluation order and of worker count, so resampling one site (or adding
//! replicas) never perturbs any other stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes disjoint.
pub mod domain {
    pub const SITE: u64 = 0x5149;
    pub const REPLICA: u64 = 0x5250;
    pub const EFRON_STEIN: u64 = 0x4553;
    pub const NB_SIGMA: u64 = 0x4e53;
    pub const NB_OUTER: u64 = 0x4e4f;
    pub const NB_INNER: u64 = 0x4e49;
    pub const NB_SUBSET: u64 = 0x4e41;
    pub const BOOTSTRAP: u64 = 0x4254;
    pub const CONTROL: u64 = 0x434e;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a seed with a sequence of coordinate words into a derived seed.
pub fn mix(seed: u64, words: &[u64]) -> u64 {
    let mut acc = splitmix64(seed);
    for &w in words {
        acc = splitmix64(acc ^ splitmix64(w.wrapping_add(0xa0761d6478bd642f)));
    }
    acc
}

/// Deterministic stream for the given seed and coordinates.
pub fn stream(seed: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, words))
}
