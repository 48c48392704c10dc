//! Exact-sampling check of the moment identity for
//! `Φ_t = exp(λ W_t - (λ²/4)(1 - 1/ρ) t)`: with `k = 1/2 - 1/(2ρ)`, `E Φ_t^k = 1`.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::mean_stderr;
use super::StudyError;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GbmMoment {
    pub lambda: f64,
    pub rho: f64,
    pub t: f64,
    pub exponent: f64,
    pub n_paths: usize,
    pub empirical_moment: f64,
    pub stderr: f64,
    /// `exp(k λ² t (k/2 - (1 - 1/ρ)/4))`, the lognormal moment for exponent `k`.
    pub exact_moment: f64,
}

/// The exponent that makes `Φ^k` a martingale.
pub fn critical_exponent(rho: f64) -> f64 {
    0.5 - 0.5 / rho
}

/// `E Φ_t^k` in closed form.
pub fn exact_moment(lambda: f64, rho: f64, t: f64, k: f64) -> f64 {
    let drift = 0.25 * lambda * lambda * (1.0 - 1.0 / rho);
    (-k * drift * t + 0.5 * k * k * lambda * lambda * t).exp()
}

/// Sample mean of `Φ_t^k` over `n_paths` exact draws; `exponent = None` uses the critical one.
pub fn gbm_moment_check(
    lambda: f64,
    rho: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
    exponent: Option<f64>,
) -> Result<GbmMoment, StudyError> {
    if !(rho > 2.0) {
        return Err(StudyError::InvalidInput(format!("rho must exceed 2, got {rho}")));
    }
    if !(t >= 0.0) || n_paths == 0 {
        return Err(StudyError::InvalidInput(
            "need t >= 0 and at least one path".into(),
        ));
    }
    let k = exponent.unwrap_or_else(|| critical_exponent(rho));
    let drift = 0.25 * lambda * lambda * (1.0 - 1.0 / rho);
    // Chunked so each stream covers a fixed block regardless of the worker count.
    const CHUNK: usize = 4096;
    let n_chunks = n_paths.div_ceil(CHUNK);
    let samples: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng::stream(seed, c as u64, Purpose::Gbm);
            let len = CHUNK.min(n_paths - c * CHUNK);
            (0..len)
                .map(|_| {
                    let w = t.sqrt() * rng::normal(&mut rng);
                    (lambda * w - drift * t).exp().powf(k)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (empirical_moment, stderr) = mean_stderr(&samples);
    Ok(GbmMoment {
        lambda,
        rho,
        t,
        exponent: k,
        n_paths,
        empirical_moment,
        stderr,
        exact_moment: exact_moment(lambda, rho, t, k),
    })
}
