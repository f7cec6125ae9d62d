//! Shared fixtures for the test suites: synthetic boundary layers, cohort
//! generators and brute-force reference implementations.
//!
//! The references work on plain tuples and strings and never call into the
//! engine's geometry or join code; they only borrow its public types to hand
//! inputs over.

pub mod geometry;
pub mod link_oracle;
pub mod pip_oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
