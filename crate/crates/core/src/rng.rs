//! Seed derivation.
//!
//! A run owns one master seed. Every subsystem (MCMC, candidate designs,
//! function sampling, objective noise) gets its own stream derived from
//! `(master, stream, index)`, so each can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used throughout the crate.
pub type BgoRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Mcmc = 1,
    Candidates = 2,
    FunctionSampling = 3,
    Objective = 4,
    InitialDesign = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> BgoRng {
    BgoRng::seed_from_u64(derive_seed(master, stream, index))
}

pub fn seeded(seed: u64) -> BgoRng {
    BgoRng::seed_from_u64(seed)
}
