//! Seeded, fork-able random streams.
//!
//! Every subsystem (mobility, channel, traffic, policy) draws from its own
//! stream derived from the episode seed and a label, so adding draws in one
//! subsystem never perturbs another.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A deterministic random stream that remembers the seed material it was
/// built from, so it can derive labelled child streams.
#[derive(Debug, Clone)]
pub struct SimRng {
    material: [u8; 32],
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"deepcq-root");
        hasher.update(seed.to_le_bytes());
        Self::from_material(hasher.finalize().into())
    }

    fn from_material(material: [u8; 32]) -> Self {
        Self {
            material,
            inner: ChaCha8Rng::from_seed(material),
        }
    }

    /// Derive an independent stream. The child depends only on this stream's
    /// seed material and `label`, never on how many values were drawn.
    pub fn fork(&self, label: &str) -> SimRng {
        assert!(!label.is_empty(), "fork label must be non-empty");
        let mut hasher = Sha256::new();
        hasher.update(self.material);
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        Self::from_material(hasher.finalize().into())
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.uniform()
    }

    /// Bernoulli trial with success probability `p` (clamped to `[0, 1]`).
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Gaussian draw with mean 0 and the given standard deviation.
    pub fn gaussian(&mut self, std_dev: f64) -> f64 {
        if std_dev <= 0.0 {
            return 0.0;
        }
        let z: f64 = self.inner.sample(rand_distr::StandardNormal);
        z * std_dev
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Hash a base seed together with arbitrary labelled parts into a new seed.
pub fn derive_seed(base: u64, parts: &[(&str, u64)]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"deepcq-seed");
    hasher.update(base.to_le_bytes());
    for (name, value) in parts {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update(value.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
