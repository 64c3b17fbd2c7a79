//! Seeded randomness.
//!
//! Every stochastic component takes an explicit `u64` seed and drives a
//! [`ChaCha8Rng`], whose output stream is fixed by its published algorithm and
//! does not depend on platform or word size. Sub-seeds for pipeline stages and
//! per-document work are derived with a SplitMix64 finalizer so that one
//! top-level seed fans out deterministically.

pub use rand_chacha::ChaCha8Rng as SeededRng;
use rand::SeedableRng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named stage, e.g. `derive_seed(seed, "lda")`.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    // FNV-1a over the stage name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Seed for the `index`-th item of a stream (documents, folds).
pub fn derive_index_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(1))))
}
