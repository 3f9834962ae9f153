//! Named sub-seed derivation.
//!
//! Every random stream in a run is seeded from one global seed and a stable
//! label: `derive(global, "ou/cpu")`. The label is hashed with 64-bit FNV-1a,
//! xored into the global seed and passed through one splitmix64 round. Both
//! functions are fixed forever; changing them changes every output file.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(global: u64, label: &str) -> u64 {
    splitmix64(global ^ fnv1a(label))
}

pub fn rng(global: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(global, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_separate_streams() {
        assert_ne!(derive(7, "ou/cpu"), derive(7, "ou/ram"));
        assert_ne!(derive(7, "ou/cpu"), derive(8, "ou/cpu"));
        assert_eq!(derive(7, "trace"), derive(7, "trace"));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(""), FNV_OFFSET);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
    }
}
