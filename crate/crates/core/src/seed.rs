//! Seed derivation.
//!
//! Every component seed is derived from the master seed as the first eight
//! bytes (little-endian) of `SHA-256(master_seed_le || tag)`, where `tag` is a
//! short UTF-8 purpose label such as `"snn.weights"` or `"rate.train"`.

use sha2::{Digest, Sha256};

pub fn derive(master: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Derive a seed indexed by an integer (sample index, epoch, repeat...).
pub fn derive_indexed(master: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}
