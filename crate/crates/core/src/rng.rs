//! Deterministic random streams.
//!
//! Every dataset and every bootstrap replication draws from its own stream,
//! seeded by mixing `(master seed, dataset index, replication index)` through
//! SplitMix64. Replication index 0 is the dataset's own simulation; bootstrap
//! replicate `r` uses index `r + 1`. Results therefore do not depend on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Real;

/// The generator used for all simulation streams.
pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-stream seed for `(master, dataset, replication)`.
pub fn derive_seed(master: u64, dataset: u64, replication: u64) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ dataset.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(h ^ replication.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed path of one dataset inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPath {
    pub master: u64,
    pub dataset: u64,
}

impl SeedPath {
    pub fn new(master: u64, dataset: u64) -> Self {
        Self { master, dataset }
    }

    /// Seed of the dataset's own simulation.
    pub fn data_seed(&self) -> u64 {
        derive_seed(self.master, self.dataset, 0)
    }

    /// Seed of bootstrap replicate `r` (0-based).
    pub fn replicate_seed(&self, r: usize) -> u64 {
        derive_seed(self.master, self.dataset, r as u64 + 1)
    }
}

/// Fills `out` with i.i.d. standard normal draws.
pub fn fill_standard_normal<T: Real, R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [T]) {
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = T::lit(z);
    }
}
