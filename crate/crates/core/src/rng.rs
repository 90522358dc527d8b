//! Seed discipline: named substreams derived from one master seed.
//!
//! Every stochastic component of a run (truth noise, per-sensor measurement
//! noise, per-neighborhood attacker, per-subset stage-1 sampling, stage-2)
//! draws from its own stream so that changing how one component consumes
//! randomness cannot perturb any other.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive the reproducible stream identified by `label` from `master_seed`.
pub fn substream(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_label_same_stream() {
        let a: Vec<u64> = substream(7, "truth").random_iter().take(8).collect();
        let b: Vec<u64> = substream(7, "truth").random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_are_independent() {
        let a: Vec<u64> = substream(7, "truth").random_iter().take(8).collect();
        let b: Vec<u64> = substream(7, "attack/0").random_iter().take(8).collect();
        let c: Vec<u64> = substream(8, "truth").random_iter().take(8).collect();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_collisions_are_distinct() {
        let a: Vec<u64> = substream(7, "meas/1").random_iter().take(4).collect();
        let b: Vec<u64> = substream(7, "meas/11").random_iter().take(4).collect();
        assert_ne!(a, b);
    }
}
