//! Random-search lower estimate of the energy constant `κ` in
//! `|(Λ^s u, Λ^s G(u))| ≤ κ ‖u‖_{W^{1,∞}} ‖u‖²_{H^s}`.

use rayon::prelude::*;
use serde::Serialize;

use super::StudyError;
use crate::dynamics::drift;
use crate::integrator::{default_decay, random_sobolev_field};
use crate::rng::{self, Purpose};
use crate::spectral::{SpectralField, TorusGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaEstimate {
    /// Largest ratio seen; a lower estimate of the true constant.
    pub kappa_hat: f64,
    pub n_samples: usize,
    pub n_skipped: usize,
    pub argmax_sample: Option<usize>,
    pub argmax_amplitude: Option<f64>,
    pub seed: u64,
    pub s: f64,
    pub dimension: usize,
    pub points: usize,
    #[serde(skip)]
    pub ratios: Vec<Option<f64>>,
}

/// `|(Λ^s u, Λ^s G(u))| / (‖u‖_{W^{1,∞}} ‖u‖²_{H^s})`, or `None` when the denominator vanishes.
pub fn kappa_ratio(u: &SpectralField, s: f64) -> Result<Option<f64>, StudyError> {
    let denom = u.w1inf_norm() * u.sobolev_norm_squared(s);
    if denom == 0.0 {
        return Ok(None);
    }
    let g = drift(u).map_err(|e| StudyError::InvalidInput(e.to_string()))?;
    Ok(Some(u.sobolev_inner(&g, s)?.abs() / denom))
}

/// Sample `i` is a random field of `H^s` norm `amplitudes[i % len]`, drawn from its own stream,
/// so extending `n_samples` keeps earlier samples unchanged.
pub fn estimate_kappa(
    grid: &TorusGrid,
    s: f64,
    n_samples: usize,
    amplitudes: &[f64],
    seed: u64,
) -> Result<KappaEstimate, StudyError> {
    if n_samples == 0 {
        return Err(StudyError::InvalidInput("n_samples must be at least 1".into()));
    }
    if amplitudes.is_empty() || amplitudes.iter().any(|a| !(*a > 0.0)) {
        return Err(StudyError::InvalidInput(
            "amplitude ladder must be non-empty and positive".into(),
        ));
    }
    let decay = default_decay(s, grid.dimension());
    let ratios = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let amplitude = amplitudes[i % amplitudes.len()];
            let mut rng = rng::stream(seed, i as u64, Purpose::Kappa);
            let u = random_sobolev_field(grid, s, amplitude, decay, &mut rng);
            kappa_ratio(&u, s)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut est = KappaEstimate {
        kappa_hat: 0.0,
        n_samples,
        n_skipped: ratios.iter().filter(|r| r.is_none()).count(),
        argmax_sample: None,
        argmax_amplitude: None,
        seed,
        s,
        dimension: grid.dimension(),
        points: grid.points(),
        ratios: Vec::new(),
    };
    for (i, r) in ratios.iter().enumerate() {
        if let Some(r) = *r {
            if est.argmax_sample.is_none() || r > est.kappa_hat {
                est.kappa_hat = r;
                est.argmax_sample = Some(i);
                est.argmax_amplitude = Some(amplitudes[i % amplitudes.len()]);
            }
        }
    }
    est.ratios = ratios;
    Ok(est)
}

/// Lattice bound `D` with `‖u‖_{W^{1,∞}} ≤ D ‖u‖_{H^s}` for every field on `grid`:
/// `(Σ_k (1+|k|²)^{-s})^{1/2} + max_j (Σ_k k_j² (1+|k|²)^{-s})^{1/2}`.
pub fn embedding_constant(grid: &TorusGrid, s: f64) -> f64 {
    let nyq = grid.nyquist();
    let d = grid.dimension();
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    for i in 0..grid.len() {
        let w = (1.0 + grid.k_squared(i)).powf(-s);
        value += w;
        for (j, kj) in grid.wavevector(i).iter().enumerate() {
            if *kj != nyq {
                grad[j] += (kj * kj) as f64 * w;
            }
        }
    }
    value.sqrt() + grad.into_iter().fold(0.0, f64::max).sqrt()
}
