//! Seed derivation and hashing shared by every stochastic stage.
//!
//! All randomness in the crate flows from ChaCha8 streams seeded through
//! [`derive_seed`], so results do not depend on thread scheduling or on the
//! order in which independent units (trees, scenarios, rows) are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a parent seed with an index into an independent child seed.
///
/// SplitMix64 finalizer applied to the pair; stable across platforms and
/// releases, which the serialized artifacts rely on.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 64-bit FNV-1a over a list of strings, with a separator byte so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn fingerprint<S: AsRef<str>>(parts: &[S]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for part in parts {
        for byte in part.as_ref().bytes().chain(std::iter::once(0x1f)) {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(PRIME);
        }
    }
    hash
}
