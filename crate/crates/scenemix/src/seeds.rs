//! Deterministic seed derivation.
//!
//! Every random decision in the pipeline draws from a ChaCha stream seeded by
//! a value derived here. Derivation goes through SHA-256 over a
//! length-prefixed encoding of the inputs, so seeds are stable across
//! platforms, runs, and crate versions, and distinct labels/indices can never
//! collide by concatenation tricks.

use sha2::{Digest, Sha256};

/// SHA-256 over a sequence of byte strings, each length-prefixed so that the
/// part boundaries are unambiguous.
pub(crate) fn stable_digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// First eight bytes of [`stable_digest`] as a little-endian u64.
pub(crate) fn stable_hash64(parts: &[&[u8]]) -> u64 {
    let digest = stable_digest(parts);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Derive a child seed from a parent seed, a purpose label, and zero or more
/// indices. Children with different labels or indices are statistically
/// independent; the same inputs always produce the same child.
pub(crate) fn child_seed(parent: u64, label: &str, indices: &[u64]) -> u64 {
    let parent_bytes = parent.to_le_bytes();
    let mut parts: Vec<Vec<u8>> = Vec::with_capacity(2 + indices.len());
    parts.push(parent_bytes.to_vec());
    parts.push(label.as_bytes().to_vec());
    for index in indices {
        parts.push(index.to_le_bytes().to_vec());
    }
    let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
    stable_hash64(&refs)
}
