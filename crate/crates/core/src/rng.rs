//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(master_seed, index, purpose)`,
//! so path `i` of an ensemble draws the same numbers regardless of how many
//! workers run the ensemble or in which order paths complete.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Separates independent uses of one `(master_seed, index)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Brownian = 1,
    InitialCondition = 2,
    Kappa = 3,
    Gbm = 4,
}

pub type Stream = ChaCha8Rng;

pub fn stream(master_seed: u64, index: u64, purpose: Purpose) -> Stream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[24..32].copy_from_slice(b"shks-rng");
    ChaCha8Rng::from_seed(key)
}

/// Standard normal draw.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Increment `W(t+dt) - W(t) ~ N(0, dt)`.
pub fn brownian_increment<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    dt.sqrt() * normal(rng)
}

/// `n` fine increments of size `dt` from one stream.
pub fn brownian_path<R: Rng + ?Sized>(rng: &mut R, dt: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| brownian_increment(rng, dt)).collect()
}

/// Sums consecutive blocks of `factor` increments: the same path seen at a coarser step.
pub fn coarsen(increments: &[f64], factor: usize) -> Vec<f64> {
    increments
        .chunks(factor)
        .map(|c| c.iter().sum())
        .collect()
}
