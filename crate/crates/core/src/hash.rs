//! Seeded 64-bit hashing used for feature buckets, shingle keys and fingerprints.
//!
//! Everything downstream that persists a hash (signature files, contamination
//! indexes, manifest fingerprints) goes through these helpers so the on-disk
//! formats stay stable across platforms.

use xxhash_rust::xxh3::{xxh3_64, xxh3_64_with_seed};

/// Seed for simhash feature hashing.
pub const SIMHASH_FEATURE_SEED: u64 = 0x5137_9a2b_c04d_e685;
/// Seed for contamination shingle keys.
pub const SHINGLE_SEED: u64 = 0x17c0_ffee_17c0_ffee;
/// Seed for the quality model's feature buckets.
pub const QUALITY_FEATURE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn hash64(bytes: &[u8]) -> u64 {
    xxh3_64(bytes)
}

pub fn hash64_seeded(bytes: &[u8], seed: u64) -> u64 {
    xxh3_64_with_seed(bytes, seed)
}

/// Hash a token sequence; tokens are separated by a byte that cannot occur
/// inside UTF-8 text so ["ab","c"] and ["a","bc"] hash differently.
pub fn hash_tokens(tokens: &[&str], seed: u64) -> u64 {
    let mut buf = Vec::with_capacity(tokens.iter().map(|t| t.len() + 1).sum());
    for t in tokens {
        buf.extend_from_slice(t.as_bytes());
        buf.push(0xFF);
    }
    xxh3_64_with_seed(&buf, seed)
}

/// 16-hex-digit fingerprint of arbitrary bytes.
pub fn fingerprint_hex(bytes: &[u8]) -> String {
    format!("{:016x}", xxh3_64(bytes))
}

/// Map a 64-bit hash to a uniform fraction in [0, 1).
pub fn unit_fraction(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_separator_prevents_gluing() {
        assert_ne!(hash_tokens(&["ab", "c"], 0), hash_tokens(&["a", "bc"], 0));
    }

    #[test]
    fn unit_fraction_range() {
        for h in [0, 1, u64::MAX, 0xdead_beef] {
            let f = unit_fraction(h);
            assert!((0.0..1.0).contains(&f));
        }
    }
}
