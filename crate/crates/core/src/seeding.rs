//! Seed derivation: every random stream in the pipeline is keyed off one
//! master seed through a stable hash, so a single `--seed` pins the run.

use sha2::{Digest, Sha256};

/// Derive a child seed from the master seed, a purpose label, and an index
/// (epoch number, grid cell, ...). SHA-256 keeps the derivation stable
/// across platforms and releases.
pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
