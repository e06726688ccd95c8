//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is
//! `(seed, role, i, j)`. Two entries of a Gram matrix never share a stream, so
//! results do not depend on evaluation order or thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the key, so streams for different
/// purposes never collide even with equal seeds and indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    TrainShots = 0x7472_6169_6e00_0001,
    CrossShots = 0x6372_6f73_7300_0002,
    Hoeffding = 0x686f_6566_6600_0003,
    Synthetic = 0x7379_6e74_6800_0004,
    Split = 0x7370_6c69_7400_0005,
    Unitary = 0x756e_6974_6100_0006,
    Validation = 0x7661_6c69_6400_0007,
}

/// Opens the stream keyed by `(seed, role, i, j)`.
pub fn keyed_stream(seed: u64, role: StreamRole, i: u64, j: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(role as u64).to_le_bytes());
    key[16..24].copy_from_slice(&i.to_le_bytes());
    key[24..32].copy_from_slice(&j.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Number of successes in `trials` Bernoulli(`prob`) draws.
pub fn bernoulli_count<R: Rng>(rng: &mut R, prob: f64, trials: u64) -> u64 {
    if prob <= 0.0 {
        return 0;
    }
    if prob >= 1.0 {
        return trials;
    }
    let mut hits = 0;
    for _ in 0..trials {
        let u: f64 = rng.gen();
        if u < prob {
            hits += 1;
        }
    }
    hits
}

/// Uniform draw from `[lo, hi)`.
pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}
