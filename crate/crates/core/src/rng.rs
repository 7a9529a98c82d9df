//! Deterministic stream splitting.
//!
//! Every stochastic quantity in a run is drawn from a ChaCha stream keyed by
//! SHA-256 of `(seed, module, trial, purpose)`, so independent trials never
//! share randomness and reruns reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

pub fn stream(seed: u64, module: &str, trial: u64, purpose: &str) -> SimRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((module.len() as u64).to_le_bytes());
    h.update(module.as_bytes());
    h.update(trial.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    SimRng::from_seed(key)
}

/// Shorthand for tests and benches that only need one stream per seed.
pub fn seeded(seed: u64) -> SimRng {
    stream(seed, "default", 0, "default")
}
