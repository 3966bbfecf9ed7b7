//! Stable 64-bit hashing used for prompt fingerprints, knowledge ids and the
//! hashing embedder.
//!
//! `std::hash::DefaultHasher` is not guaranteed stable across Rust releases, so
//! anything that ends up in a fixture file goes through FNV-1a instead.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`, starting from the standard offset basis.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_seeded(bytes, 0)
}

/// FNV-1a with the offset basis perturbed by `seed`.
pub fn fnv1a64_seeded(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Trim and collapse every whitespace run to a single space.
pub fn normalize_prompt(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 16 lowercase hex digits identifying a prompt independent of whitespace jitter.
pub fn prompt_fingerprint(text: &str) -> String {
    format!("{:016x}", fnv1a64(normalize_prompt(text).as_bytes()))
}
