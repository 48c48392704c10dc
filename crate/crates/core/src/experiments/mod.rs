//! Ensemble and refinement studies built on the integrator.

pub mod convergence;
pub mod gbm;
pub mod kappa;
pub mod montecarlo;
pub mod stats;

use thiserror::Error;

use crate::integrator::ConfigError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("invalid study input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("study aborted: path {path} ended as {status} at t = {t} (dt = {dt})")]
    Aborted {
        path: u64,
        status: &'static str,
        t: f64,
        dt: f64,
    },
}

impl From<crate::spectral::SpectralError> for StudyError {
    fn from(e: crate::spectral::SpectralError) -> Self {
        StudyError::Config(e.into())
    }
}

pub use convergence::{
    spectral_convergence, temporal_convergence, transform_refinement, SpectralConvergence,
    TemporalConvergence, TransformRefinement,
};
pub use gbm::{gbm_moment_check, GbmMoment};
pub use kappa::{embedding_constant, estimate_kappa, kappa_ratio, KappaEstimate};
pub use montecarlo::{
    ensemble_log_energy_drift, log_energy_drift, monte_carlo_survival, run_ensemble,
    threshold_scan, LogEnergyDrift, McReport, PathSummary, ScanParameter, ScanRow, TheoryParams,
};
