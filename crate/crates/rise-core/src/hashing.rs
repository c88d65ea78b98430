//! Stable feature hashing.
//!
//! All hashed features (classifier n-grams, encoder token buckets) go through
//! 64-bit FNV-1a so that bucket assignments are identical across platforms,
//! Rust releases, and runs. `std::hash` is deliberately avoided here: its
//! output is not stable.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Hash a namespaced feature key into one of `dim` buckets.
///
/// The namespace byte keeps unigram/bigram/character features in disjoint
/// key spaces before hashing; `0x1f` (unit separator) never occurs in text.
pub fn feature_bucket(namespace: u8, key: &str, dim: usize) -> usize {
    let mut bytes = Vec::with_capacity(key.len() + 2);
    bytes.push(namespace);
    bytes.push(0x1f);
    bytes.extend_from_slice(key.as_bytes());
    (fnv1a64(&bytes) % dim as u64) as usize
}
