//! Survival ensembles, intensity scans and the logarithmic energy statistic.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{least_squares_slope, mean_stderr, wilson_interval};
use super::StudyError;
use crate::dynamics::NoiseModel;
use crate::integrator::{run_path, PathStatus, SolverConfig, TrajectoryRecord};

/// Constants entering the small-data result for linear noise: stopping level `R > 1`,
/// exponent `ρ > 2`, and the embedding-type constant `C̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryParams {
    pub r: f64,
    pub rho: f64,
    pub c_tilde: f64,
}

impl TheoryParams {
    /// `1 - R^{-(ρ-1)/(2ρ)}`.
    pub fn probability_bound(&self) -> f64 {
        1.0 - self.r.powf(-(self.rho - 1.0) / (2.0 * self.rho))
    }

    /// Largest admissible `‖u_0‖_{H^s}`: `λ² / (2 R ρ C̃)`.
    pub fn data_bound(&self, lambda: f64) -> f64 {
        lambda * lambda / (2.0 * self.r * self.rho * self.c_tilde)
    }

    pub fn is_admissible(&self) -> bool {
        self.r > 1.0 && self.rho > 2.0 && self.c_tilde > 0.0
    }
}

/// Terminal state of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub path_id: u64,
    pub status: &'static str,
    pub t_stop: Option<f64>,
    pub final_hs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    /// Survival is "no stop and no overflow before `t_final`", a proxy for `P{ξ > t_final}`.
    pub estimand: &'static str,
    pub n_paths: usize,
    pub n_survived: usize,
    pub n_stopped: usize,
    pub n_nonfinite: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Share of paths that overflowed before reaching the threshold; large values mean `dt` is too coarse.
    pub nonfinite_ratio: f64,
    pub t_final: f64,
    pub master_seed: u64,
    pub theory_bound: Option<f64>,
    /// `λ² / (2 R ρ C̃)` whenever theory constants and linear noise are configured.
    pub data_bound: Option<f64>,
    pub initial_hs: Option<f64>,
}

impl McReport {
    pub fn ci_half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    fn from_statuses(
        statuses: &[PathStatus],
        t_final: f64,
        master_seed: u64,
    ) -> Self {
        let n = statuses.len();
        let count = |f: fn(&PathStatus) -> bool| statuses.iter().filter(|s| f(s)).count();
        let n_survived = count(|s| matches!(s, PathStatus::Survived));
        let n_stopped = count(|s| matches!(s, PathStatus::Stopped { .. }));
        let n_nonfinite = count(|s| matches!(s, PathStatus::NonFinite { .. }));
        let (ci_low, ci_high) = wilson_interval(n_survived, n);
        Self {
            estimand: "P(xi > t_final)",
            n_paths: n,
            n_survived,
            n_stopped,
            n_nonfinite,
            p_hat: n_survived as f64 / n as f64,
            ci_low,
            ci_high,
            nonfinite_ratio: n_nonfinite as f64 / n as f64,
            t_final,
            master_seed,
            theory_bound: None,
            data_bound: None,
            initial_hs: None,
        }
    }
}

/// Runs `n_paths` independent trajectories and reports survival statistics.
///
/// The theoretical lower bound is attached only when the noise is linear and the
/// initial datum satisfies `‖u_0‖_{H^s} ≤ λ²/(2RρC̃)` on every path.
pub fn monte_carlo_survival(
    cfg: &SolverConfig,
    n_paths: usize,
    master_seed: u64,
    theory: Option<TheoryParams>,
) -> Result<(McReport, Vec<PathSummary>), StudyError> {
    let records = run_ensemble(cfg, n_paths, master_seed)?;
    let statuses: Vec<PathStatus> = records.iter().map(|r| r.status).collect();
    let mut report = McReport::from_statuses(&statuses, cfg.t_final, master_seed);

    let initial_hs = records
        .iter()
        .map(|r| r.hs_norms[0])
        .fold(0.0, f64::max);
    report.initial_hs = Some(initial_hs);
    if let (Some(theory), NoiseModel::Linear { lambda }) = (theory, cfg.noise) {
        if theory.is_admissible() && lambda != 0.0 {
            let bound = theory.data_bound(lambda);
            report.data_bound = Some(bound);
            if initial_hs <= bound {
                report.theory_bound = Some(theory.probability_bound());
            }
        }
    }

    let summaries = records
        .iter()
        .enumerate()
        .map(|(i, r)| PathSummary {
            path_id: i as u64,
            status: r.status.label(),
            t_stop: r.status.event_time(),
            final_hs: r.final_hs(),
        })
        .collect();
    Ok((report, summaries))
}

/// Trajectory records for paths `0..n_paths`, in path order.
pub fn run_ensemble(
    cfg: &SolverConfig,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<TrajectoryRecord>, StudyError> {
    if n_paths == 0 {
        return Err(StudyError::InvalidInput("n_paths must be at least 1".into()));
    }
    cfg.validate()?;
    let u0 = cfg.initial_field(master_seed, 0)?;
    cfg.validate_initial(&u0)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| Ok(run_path(cfg, master_seed, i)?.record))
        .collect()
}

/// Noise parameter varied by [`threshold_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanParameter {
    NonlinearC,
    NonlinearDelta,
    LinearLambda,
}

impl ScanParameter {
    pub fn name(&self) -> &'static str {
        match self {
            ScanParameter::NonlinearC => "nonlinear_c",
            ScanParameter::NonlinearDelta => "nonlinear_delta",
            ScanParameter::LinearLambda => "linear_lambda",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nonlinear_c" => Some(ScanParameter::NonlinearC),
            "nonlinear_delta" => Some(ScanParameter::NonlinearDelta),
            "linear_lambda" => Some(ScanParameter::LinearLambda),
            _ => None,
        }
    }

    /// Noise model for `value`, keeping the other parameter of `base`.
    /// Zero intensity maps to [`NoiseModel::Zero`].
    pub fn apply(&self, base: NoiseModel, value: f64) -> NoiseModel {
        let (delta, c_eff) = match base {
            NoiseModel::Nonlinear { delta, c_eff } => (delta, c_eff),
            _ => (1.0, 1.0),
        };
        match self {
            ScanParameter::NonlinearC if value == 0.0 => NoiseModel::Zero,
            ScanParameter::NonlinearC => NoiseModel::Nonlinear { delta, c_eff: value },
            ScanParameter::NonlinearDelta => NoiseModel::Nonlinear { delta: value, c_eff },
            ScanParameter::LinearLambda if value == 0.0 => NoiseModel::Zero,
            ScanParameter::LinearLambda => NoiseModel::Linear { lambda: value },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub value: f64,
    pub report: McReport,
}

/// One survival report per parameter value; every value reuses the same path seeds.
pub fn threshold_scan(
    base: &SolverConfig,
    parameter: ScanParameter,
    values: &[f64],
    n_paths: usize,
    master_seed: u64,
    theory: Option<TheoryParams>,
) -> Result<Vec<ScanRow>, StudyError> {
    if values.is_empty() {
        return Err(StudyError::InvalidInput("scan needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            cfg.noise = parameter.apply(base.noise, value);
            let (report, _) = monte_carlo_survival(&cfg, n_paths, master_seed, theory)?;
            Ok(ScanRow { value, report })
        })
        .collect()
}

/// Least-squares slope of `ln(e + ‖u‖²_{H^s})` against time along one path.
pub fn log_energy_drift(record: &TrajectoryRecord) -> Result<f64, StudyError> {
    if record.times.len() < 2 {
        return Err(StudyError::InvalidInput(
            "log-energy slope needs at least two samples".into(),
        ));
    }
    least_squares_slope(&record.times, &record.log_energy)
        .ok_or_else(|| StudyError::InvalidInput("degenerate sample times".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEnergyDrift {
    pub mean_slope: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Ensemble average of [`log_energy_drift`].
pub fn ensemble_log_energy_drift(records: &[TrajectoryRecord]) -> Result<LogEnergyDrift, StudyError> {
    let slopes = records
        .iter()
        .map(log_energy_drift)
        .collect::<Result<Vec<_>, _>>()?;
    let (mean_slope, stderr) = mean_stderr(&slopes);
    Ok(LogEnergyDrift {
        mean_slope,
        stderr,
        n_paths: slopes.len(),
    })
}
