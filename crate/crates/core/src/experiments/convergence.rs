//! Refinement studies in time (coupled Brownian paths) and in the Galerkin order.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::log_log_slope;
use super::StudyError;
use crate::integrator::{
    integrate, transform_compare_with_increments, InitialCondition, PathStatus, SolverConfig,
};
use crate::rng::{self, Purpose};
use crate::spectral::{SpectralField, TorusGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalConvergence {
    /// Step sizes with a reported error, coarsest first.
    pub dts: Vec<f64>,
    /// Mean over paths of `‖u_dt(T) - u_ref(T)‖_{H^s}`.
    pub errors: Vec<f64>,
    pub reference_dt: f64,
    pub n_paths: usize,
    pub slope: Option<f64>,
}

/// Integer ratios `dt / dt_ref` for a strictly decreasing ladder whose last entry is the reference.
fn refinement_factors(dt_ladder: &[f64], t_final: f64) -> Result<Vec<usize>, StudyError> {
    if dt_ladder.len() < 2 {
        return Err(StudyError::InvalidInput(
            "dt ladder needs at least two entries to fit a slope".into(),
        ));
    }
    if dt_ladder.iter().any(|dt| !(*dt > 0.0)) {
        return Err(StudyError::InvalidInput("dt ladder entries must be positive".into()));
    }
    if dt_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(StudyError::InvalidInput("dt ladder must be strictly decreasing".into()));
    }
    let finest = *dt_ladder.last().expect("non-empty");
    let factors = dt_ladder
        .iter()
        .map(|dt| {
            let ratio = dt / finest;
            let rounded = ratio.round();
            if (ratio - rounded).abs() > 1e-9 * ratio {
                Err(StudyError::InvalidInput(format!(
                    "finest dt {finest} does not divide dt {dt}"
                )))
            } else {
                Ok(rounded as usize)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let coarse_steps = t_final / dt_ladder[0];
    if (coarse_steps - coarse_steps.round()).abs() > 1e-9 * coarse_steps.max(1.0) {
        return Err(StudyError::InvalidInput(format!(
            "t_final {t_final} is not a multiple of the coarsest dt {}",
            dt_ladder[0]
        )));
    }
    Ok(factors)
}

fn with_dt(cfg: &SolverConfig, dt: f64) -> SolverConfig {
    let mut c = cfg.clone();
    c.dt = dt;
    c.record_every = usize::MAX;
    c
}

fn check_survived(status: PathStatus, path: u64, dt: f64) -> Result<(), StudyError> {
    match status {
        PathStatus::Survived => Ok(()),
        other => Err(StudyError::Aborted {
            path,
            status: other.label(),
            t: other.event_time().unwrap_or(f64::NAN),
            dt,
        }),
    }
}

/// Strong error at `t_final` of every coarser step against the finest entry of
/// `dt_ladder`, all driven by sums of one fine Brownian path per sample.
pub fn temporal_convergence(
    cfg: &SolverConfig,
    dt_ladder: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<TemporalConvergence, StudyError> {
    cfg.validate()?;
    if n_paths == 0 {
        return Err(StudyError::InvalidInput("n_paths must be at least 1".into()));
    }
    let factors = refinement_factors(dt_ladder, cfg.t_final)?;
    let reference_dt = *dt_ladder.last().expect("non-empty");
    let n_coarse = dt_ladder.len() - 1;

    let per_path = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let u0 = cfg.initial_field(master_seed, path)?;
            let ref_cfg = with_dt(cfg, reference_dt);
            let mut rng = rng::stream(master_seed, path, Purpose::Brownian);
            let fine = rng::brownian_path(&mut rng, reference_dt, ref_cfg.n_steps());
            let mut it = fine.iter().copied();
            let reference = integrate(&ref_cfg, u0.clone(), master_seed, || it.next().unwrap_or(0.0));
            check_survived(reference.record.status, path, reference_dt)?;

            let mut errs = Vec::with_capacity(n_coarse);
            for (dt, &factor) in dt_ladder[..n_coarse].iter().zip(&factors) {
                let coarse = rng::coarsen(&fine, factor);
                let c = with_dt(cfg, *dt);
                let mut it = coarse.iter().copied();
                let out = integrate(&c, u0.clone(), master_seed, || it.next().unwrap_or(0.0));
                check_survived(out.record.status, path, *dt)?;
                let mut diff = out.final_field;
                diff.add_scaled(&reference.final_field, -1.0)?;
                errs.push(diff.sobolev_norm(cfg.s));
            }
            Ok(errs)
        })
        .collect::<Result<Vec<_>, StudyError>>()?;

    let errors: Vec<f64> = (0..n_coarse)
        .map(|j| per_path.iter().map(|e| e[j]).sum::<f64>() / n_paths as f64)
        .collect();
    let dts = dt_ladder[..n_coarse].to_vec();
    let slope = log_log_slope(&dts, &errors);
    Ok(TemporalConvergence {
        dts,
        errors,
        reference_dt,
        n_paths,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralConvergence {
    pub ns: Vec<usize>,
    /// `‖v - P_n v‖_{H^r}` for each `n`.
    pub errors: Vec<f64>,
    /// Fitted log-log decay exponent; `None` when fewer than two errors are positive.
    pub slope: Option<f64>,
    /// The rate `r - s` of the projection error estimate.
    pub theory_slope: f64,
}

/// Projection errors of the profile in `H^r` across the Galerkin orders `n_ladder`.
pub fn spectral_convergence(
    grid: &TorusGrid,
    profile: &InitialCondition,
    s: f64,
    r: f64,
    n_ladder: &[usize],
) -> Result<SpectralConvergence, StudyError> {
    if n_ladder.is_empty() {
        return Err(StudyError::InvalidInput("empty Galerkin ladder".into()));
    }
    if r > s {
        return Err(StudyError::InvalidInput(format!("need r <= s, got r = {r}, s = {s}")));
    }
    let v = profile.build(grid, s, 0, 0)?;
    let errors = n_ladder
        .iter()
        .map(|&n| {
            let mut tail = v.clone();
            tail.add_scaled(&v.galerkin_project(n)?, -1.0)?;
            Ok(tail.sobolev_norm(r))
        })
        .collect::<Result<Vec<_>, StudyError>>()?;
    let ns_f: Vec<f64> = n_ladder.iter().map(|&n| n as f64).collect();
    Ok(SpectralConvergence {
        ns: n_ladder.to_vec(),
        slope: log_log_slope(&ns_f, &errors),
        errors,
        theory_slope: r - s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformRefinement {
    pub dts: Vec<f64>,
    /// Mean over paths of the discrepancy at `t_final`.
    pub final_discrepancy: Vec<f64>,
    /// Mean over paths of the largest sampled discrepancy.
    pub max_discrepancy: Vec<f64>,
    pub n_paths: usize,
    pub slope: Option<f64>,
}

/// Direct-versus-transformed discrepancy for every `dt` of the ladder on coupled paths.
pub fn transform_refinement(
    cfg: &SolverConfig,
    dt_ladder: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<TransformRefinement, StudyError> {
    cfg.validate()?;
    if n_paths == 0 {
        return Err(StudyError::InvalidInput("n_paths must be at least 1".into()));
    }
    let factors = refinement_factors(dt_ladder, cfg.t_final)?;
    let finest = *dt_ladder.last().expect("non-empty");

    let per_path = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let u0: SpectralField = cfg.initial_field(master_seed, path)?;
            let mut rng = rng::stream(master_seed, path, Purpose::Brownian);
            let fine = rng::brownian_path(&mut rng, finest, with_dt(cfg, finest).n_steps());
            dt_ladder
                .iter()
                .zip(&factors)
                .map(|(dt, &factor)| {
                    let mut c = cfg.clone();
                    c.dt = *dt;
                    let cmp = transform_compare_with_increments(&c, &u0, &rng::coarsen(&fine, factor))?;
                    if let Some(t) = cmp.aborted_at {
                        return Err(StudyError::Aborted {
                            path,
                            status: "nonfinite",
                            t,
                            dt: *dt,
                        });
                    }
                    Ok((cmp.final_discrepancy, cmp.max_discrepancy))
                })
                .collect::<Result<Vec<_>, StudyError>>()
        })
        .collect::<Result<Vec<_>, StudyError>>()?;

    let mean = |f: fn(&(f64, f64)) -> f64, j: usize| {
        per_path.iter().map(|p| f(&p[j])).sum::<f64>() / n_paths as f64
    };
    let final_discrepancy: Vec<f64> = (0..dt_ladder.len()).map(|j| mean(|p| p.0, j)).collect();
    let max_discrepancy: Vec<f64> = (0..dt_ladder.len()).map(|j| mean(|p| p.1, j)).collect();
    Ok(TransformRefinement {
        dts: dt_ladder.to_vec(),
        slope: log_log_slope(dt_ladder, &final_discrepancy),
        final_discrepancy,
        max_discrepancy,
        n_paths,
    })
}
