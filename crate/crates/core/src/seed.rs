//! Deterministic per-task seed derivation.
//!
//! A task seed is the first eight bytes (little endian) of
//! `SHA-256(le_bytes(seed) ‖ label₁ ‖ 0x00 ‖ label₂ ‖ 0x00 ‖ …)`.
//! Results therefore do not depend on the order in which tasks are scheduled.

use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for label in labels {
        h.update(label.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
