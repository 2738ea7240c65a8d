//! Seeded random generator shared by every stochastic component.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded through
//! `SeedableRng::seed_from_u64`, which expands the 64-bit seed with PCG32.
//! Both algorithms are fully specified, so sequences are reproducible
//! across platforms and can be re-implemented elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
