//! Named random streams derived from a single run seed.
//!
//! A stream is identified by a stage name and an index; its seed is a hash of
//! `(root seed, name, index)`, so adding a stage never shifts the draws of
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    root: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn derive(&self, name: &str, index: u64) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn rng(&self, name: &str, index: u64) -> Rng {
        Rng::seed_from_u64(self.derive(name, index))
    }

    pub fn child(&self, name: &str, index: u64) -> SeedStream {
        SeedStream::new(self.derive(name, index))
    }
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
