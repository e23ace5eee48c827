//! Per-stage seeds derived from one root seed.

use sha2::{Digest, Sha256};

/// First 8 bytes (little endian) of `SHA-256(root_le || stage)`.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_differ_and_repeat() {
        assert_eq!(stage_seed(7, "complete"), stage_seed(7, "complete"));
        assert_ne!(stage_seed(7, "complete"), stage_seed(7, "regularity"));
        assert_ne!(stage_seed(7, "complete"), stage_seed(8, "complete"));
    }
}
