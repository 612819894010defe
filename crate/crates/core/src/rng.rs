//! Seed derivation for reproducible parallel Monte Carlo.
//!
//! Every independent task (a fold repetition, a holdout block, a pseudo-proxy
//! replicate, a Gibbs chain) draws from its own ChaCha stream keyed by the
//! master seed and the task's index path. Results never depend on which
//! worker runs which task.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and an index path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &idx| {
        splitmix64(acc ^ splitmix64(idx.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

/// Independent generator for the task at `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}
