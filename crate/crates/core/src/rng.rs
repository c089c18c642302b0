//! Counter-based random streams. Every draw is addressed by a seed, a domain
//! tag and a counter, so results never depend on how many draws happened
//! elsewhere in the program.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const DOMAIN_INIT: u64 = 0x696e_6974;
pub(crate) const DOMAIN_SHUFFLE: u64 = 0x7368_7566;
pub(crate) const DOMAIN_FOLDS: u64 = 0x666f_6c64;
pub(crate) const DOMAIN_DROPOUT: u64 = 0x6472_6f70;
pub(crate) const DOMAIN_SYNTH: u64 = 0x7379_6e74;

/// SplitMix64 finalizer.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn derive(seed: u64, salt: u64) -> u64 {
    mix(seed ^ mix(salt))
}

pub(crate) fn stream(seed: u64, domain: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, domain));
    rng.set_stream(counter);
    rng
}
