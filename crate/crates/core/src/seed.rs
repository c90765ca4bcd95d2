//! Deterministic seed derivation so every stochastic stream in a run is
//! attributable to one master seed.
//!
//! Sub-streams are labelled (`"data"`, `"delay"`, `"sample"`, …) and mixed
//! with splitmix64; the same master seed therefore yields bit-identical
//! streams regardless of how much randomness sibling streams consumed.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a labelled sub-seed from a master seed.
pub fn derive(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label.as_bytes()))
}

/// Derives an indexed sub-seed (e.g. one per round).
pub fn derive_indexed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(master, label) ^ splitmix64(index))
}

/// FNV-1a over arbitrary bytes; used for config fingerprints.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    fnv1a(bytes)
}
