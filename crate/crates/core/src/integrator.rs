//! Euler–Maruyama time stepping of the truncated Galerkin system, threshold
//! stopping, and the pathwise (Doss–Sussmann) transform for linear noise.

use log::warn;
use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::{
    cutoff_theta, diffusion_coefficient_with_norm, truncated_drift_with_norm, CutoffSpec,
    DriftInputs, DynamicsError, NoiseModel,
};
use crate::rng::{self, Purpose, Stream};
use crate::spectral::{dealiased_product, SpectralError, SpectralField, TorusGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Dynamics(DynamicsError),
}

impl StepError {
    fn from_dynamics(e: DynamicsError, t: f64) -> Self {
        match e {
            DynamicsError::NonFinite { .. } | DynamicsError::NegativeArgument(_) => {
                StepError::NonFinite { t }
            }
            other => StepError::Dynamics(other),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Initial datum `u_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant {
        c: f64,
    },
    /// `offset + amplitude · cos(k·x)`.
    SingleMode {
        offset: f64,
        amplitude: f64,
        wavevector: Vec<i64>,
    },
    /// Random field with coefficients `ξ_k (1+|k|²)^{-decay/2}`, rescaled to the
    /// given `H^s` norm. With `seed = None` every ensemble path draws its own field.
    RandomSobolev {
        target_norm: f64,
        decay: Option<f64>,
        seed: Option<u64>,
    },
    /// Deterministic coefficients `amplitude · (1+|k|²)^{-decay/2}`.
    PowerLaw { amplitude: f64, decay: f64 },
}

/// Default coefficient decay for random data, placing the field in `H^s` almost surely.
pub fn default_decay(s: f64, dimension: usize) -> f64 {
    s + dimension as f64 / 2.0 + 0.51
}

impl InitialCondition {
    pub fn build(
        &self,
        grid: &TorusGrid,
        s: f64,
        master_seed: u64,
        path_index: u64,
    ) -> Result<SpectralField, ConfigError> {
        match self {
            InitialCondition::Constant { c } => Ok(SpectralField::constant(grid, *c)),
            InitialCondition::SingleMode {
                offset,
                amplitude,
                wavevector,
            } => {
                if wavevector.len() != grid.dimension() {
                    return Err(invalid("ic.k", "wavevector length differs from dimension"));
                }
                let nyq = grid.nyquist();
                if wavevector.iter().any(|k| k.abs() >= nyq) {
                    return Err(invalid("ic.k", "wavevector outside the resolved band"));
                }
                let mut coeffs = vec![Complex64::default(); grid.len()];
                coeffs[0] += *offset;
                if wavevector.iter().all(|&k| k == 0) {
                    coeffs[0] += *amplitude;
                } else {
                    let i = grid.index_of(wavevector).expect("in band");
                    let p = grid.index_of(&wavevector.iter().map(|k| -k).collect::<Vec<_>>());
                    coeffs[i] += 0.5 * amplitude;
                    coeffs[p.expect("in band")] += 0.5 * amplitude;
                }
                Ok(SpectralField::from_coeffs(grid, coeffs)?)
            }
            InitialCondition::RandomSobolev {
                target_norm,
                decay,
                seed,
            } => {
                let decay = decay.unwrap_or_else(|| default_decay(s, grid.dimension()));
                let mut rng = match seed {
                    Some(seed) => rng::stream(*seed, 0, Purpose::InitialCondition),
                    None => rng::stream(master_seed, path_index, Purpose::InitialCondition),
                };
                Ok(random_sobolev_field(grid, s, *target_norm, decay, &mut rng))
            }
            InitialCondition::PowerLaw { amplitude, decay } => {
                let nyq = grid.nyquist();
                let coeffs = (0..grid.len())
                    .map(|i| {
                        if grid.wavevector(i).contains(&nyq) {
                            Complex64::default()
                        } else {
                            Complex64::new(
                                amplitude * (1.0 + grid.k_squared(i)).powf(-0.5 * decay),
                                0.0,
                            )
                        }
                    })
                    .collect();
                Ok(SpectralField::from_coeffs(grid, coeffs)?)
            }
        }
    }
}

/// Hermitian Gaussian field with power-law envelope, scaled to `‖·‖_{H^s} = target_norm`.
pub fn random_sobolev_field(
    grid: &TorusGrid,
    s: f64,
    target_norm: f64,
    decay: f64,
    rng: &mut Stream,
) -> SpectralField {
    let nyq = grid.nyquist();
    let mut coeffs = vec![Complex64::default(); grid.len()];
    for i in 0..grid.len() {
        let p = grid.partner(i);
        if p < i {
            continue;
        }
        let envelope = (1.0 + grid.k_squared(i)).powf(-0.5 * decay);
        let xi = if p == i {
            Complex64::new(rng::normal(rng), 0.0)
        } else {
            Complex64::new(rng::normal(rng), rng::normal(rng)) * std::f64::consts::FRAC_1_SQRT_2
        };
        if grid.wavevector(i).contains(&nyq) {
            continue;
        }
        coeffs[i] = xi * envelope;
        coeffs[p] = coeffs[i].conj();
    }
    let field = SpectralField::from_coeffs(grid, coeffs).expect("length matches grid");
    let norm = field.sobolev_norm(s);
    if norm > 0.0 {
        field.scaled(target_norm / norm)
    } else {
        field
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grid: TorusGrid,
    pub s: f64,
    pub dt: f64,
    pub t_final: f64,
    pub cutoff: CutoffSpec,
    pub galerkin_n: usize,
    pub noise: NoiseModel,
    pub stop_threshold: f64,
    pub record_every: usize,
    pub initial: InitialCondition,
}

impl SolverConfig {
    /// Defaults: `s = 2`, `dt = 1e-3`, `t_final = 1`, no cut-off, `n = M/2`,
    /// zero noise, threshold `1e3`, a sample every 10 steps.
    pub fn new(grid: TorusGrid, initial: InitialCondition) -> Self {
        let n = grid.points() / 2;
        Self {
            grid,
            s: 2.0,
            dt: 1e-3,
            t_final: 1.0,
            cutoff: CutoffSpec::Unbounded,
            galerkin_n: n,
            noise: NoiseModel::Zero,
            stop_threshold: 1e3,
            record_every: 10,
            initial,
        }
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(invalid("t_final", format!("must be positive, got {}", self.t_final)));
        }
        if !(self.s > 0.0) {
            return Err(invalid("s", format!("must be positive, got {}", self.s)));
        }
        if !(self.stop_threshold > 0.0) {
            return Err(invalid("stop_threshold", "must be positive"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if self.galerkin_n == 0 || self.galerkin_n > self.grid.points() / 2 {
            return Err(invalid(
                "galerkin.n",
                format!("must lie in 1..={}, got {}", self.grid.points() / 2, self.galerkin_n),
            ));
        }
        if let CutoffSpec::Radius(r) = self.cutoff {
            if !(r > 0.0) {
                return Err(invalid("cutoff.radius", "must be positive"));
            }
        }
        match self.noise {
            NoiseModel::Nonlinear { delta, c_eff } => {
                if !(delta >= 0.0) {
                    return Err(invalid("noise.delta", "must be non-negative"));
                }
                if !(c_eff > 0.0) {
                    return Err(invalid("noise.c_eff", "must be positive"));
                }
            }
            NoiseModel::Linear { lambda } if !lambda.is_finite() => {
                return Err(invalid("noise.lambda", "must be finite"));
            }
            _ => {}
        }
        if self.s <= self.grid.dimension() as f64 / 2.0 + 1.0 {
            warn!(
                "s = {} does not exceed d/2 + 1 = {}; local theory does not apply",
                self.s,
                self.grid.dimension() as f64 / 2.0 + 1.0
            );
        }
        Ok(())
    }

    /// Validation plus the requirement that `u_0` starts below the stopping level.
    pub fn validate_initial(&self, u0: &SpectralField) -> Result<(), ConfigError> {
        self.validate()?;
        let w = u0.w1inf_norm();
        if !(self.stop_threshold > w) {
            return Err(invalid(
                "stop_threshold",
                format!("{} does not exceed ‖u_0‖_W1inf = {w}", self.stop_threshold),
            ));
        }
        Ok(())
    }

    pub fn initial_field(&self, master_seed: u64, path_index: u64) -> Result<SpectralField, ConfigError> {
        self.initial.build(&self.grid, self.s, master_seed, path_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathStatus {
    Survived,
    /// First grid time at which `‖u‖_{W^{1,∞}}` reached the stopping level.
    /// This is a surrogate for the blow-up stopping time, never a resolved singularity.
    Stopped { t_stop: f64 },
    NonFinite { t_fail: f64 },
}

impl PathStatus {
    pub fn label(&self) -> &'static str {
        match self {
            PathStatus::Survived => "survived",
            PathStatus::Stopped { .. } => "stopped",
            PathStatus::NonFinite { .. } => "nonfinite",
        }
    }

    pub fn event_time(&self) -> Option<f64> {
        match *self {
            PathStatus::Survived => None,
            PathStatus::Stopped { t_stop } => Some(t_stop),
            PathStatus::NonFinite { t_fail } => Some(t_fail),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub hs_norms: Vec<f64>,
    pub w1inf_norms: Vec<f64>,
    /// `ln(e + ‖u‖²_{H^s})`.
    pub log_energy: Vec<f64>,
    pub status: PathStatus,
    pub seed: u64,
}

impl TrajectoryRecord {
    fn new(seed: u64) -> Self {
        Self {
            times: Vec::new(),
            hs_norms: Vec::new(),
            w1inf_norms: Vec::new(),
            log_energy: Vec::new(),
            status: PathStatus::Survived,
            seed,
        }
    }

    fn push(&mut self, t: f64, hs: f64, w1inf: f64) {
        self.times.push(t);
        self.hs_norms.push(hs);
        self.w1inf_norms.push(w1inf);
        self.log_energy.push((std::f64::consts::E + hs * hs).ln());
    }

    pub fn final_hs(&self) -> f64 {
        self.hs_norms.last().copied().unwrap_or(f64::NAN)
    }
}

/// A finished path with its terminal state.
#[derive(Debug, Clone)]
pub struct PathOutcome {
    pub record: TrajectoryRecord,
    pub final_field: SpectralField,
}

/// One explicit Euler–Maruyama step of the cut-off Galerkin system:
/// `u' = u - θ_R P_n G(u) dt + θ_R P_n σ(u) dW`.
pub fn em_step(
    u: &SpectralField,
    t: f64,
    dw: f64,
    cfg: &SolverConfig,
) -> Result<SpectralField, StepError> {
    em_step_with_norm(u, u.w1inf_norm(), t, dw, cfg)
}

pub(crate) fn em_step_with_norm(
    u: &SpectralField,
    w1inf: f64,
    t: f64,
    dw: f64,
    cfg: &SolverConfig,
) -> Result<SpectralField, StepError> {
    let t_next = t + cfg.dt;
    let fail = |e| StepError::from_dynamics(e, t_next);
    let drift = truncated_drift_with_norm(u, w1inf, cfg.cutoff, cfg.galerkin_n).map_err(fail)?;
    let mut next = u.clone();
    next.add_scaled(&drift, -cfg.dt)
        .map_err(|e| fail(e.into()))?;
    if !cfg.noise.is_zero() {
        let theta = cutoff_theta(w1inf, cfg.cutoff).map_err(fail)?;
        let sigma = diffusion_coefficient_with_norm(u, w1inf, cfg.noise)
            .galerkin_project(cfg.galerkin_n)
            .map_err(|e| fail(e.into()))?;
        next.add_scaled(&sigma, theta * dw)
            .map_err(|e| fail(e.into()))?;
    }
    if !next.is_finite() {
        return Err(StepError::NonFinite { t: t_next });
    }
    Ok(next)
}

/// Integrates from `u0` with increments pulled from `next_dw`, one per step.
pub fn integrate(
    cfg: &SolverConfig,
    u0: SpectralField,
    seed: u64,
    mut next_dw: impl FnMut() -> f64,
) -> PathOutcome {
    let mut record = TrajectoryRecord::new(seed);
    let mut u = u0;
    let mut w = u.w1inf_norm();
    record.push(0.0, u.sobolev_norm(cfg.s), w);
    if w >= cfg.stop_threshold {
        record.status = PathStatus::Stopped { t_stop: 0.0 };
        return PathOutcome { record, final_field: u };
    }
    let n_steps = cfg.n_steps();
    for step in 1..=n_steps {
        let t_prev = (step - 1) as f64 * cfg.dt;
        let t = step as f64 * cfg.dt;
        let dw = next_dw();
        let next = match em_step_with_norm(&u, w, t_prev, dw, cfg) {
            Ok(next) => next,
            Err(_) => {
                record.status = PathStatus::NonFinite { t_fail: t };
                break;
            }
        };
        let w_next = next.w1inf_norm();
        let hs = next.sobolev_norm(cfg.s);
        if !w_next.is_finite() || !(hs * hs).is_finite() {
            record.status = PathStatus::NonFinite { t_fail: t };
            break;
        }
        u = next;
        w = w_next;
        if w >= cfg.stop_threshold {
            record.push(t, hs, w);
            record.status = PathStatus::Stopped { t_stop: t };
            break;
        }
        if step % cfg.record_every == 0 || step == n_steps {
            record.push(t, hs, w);
        }
    }
    PathOutcome { record, final_field: u }
}

/// Runs path `path_index` of the ensemble keyed by `master_seed`.
pub fn run_path(
    cfg: &SolverConfig,
    master_seed: u64,
    path_index: u64,
) -> Result<PathOutcome, ConfigError> {
    let u0 = cfg.initial_field(master_seed, path_index)?;
    let mut rng = rng::stream(master_seed, path_index, Purpose::Brownian);
    let dt = cfg.dt;
    Ok(integrate(cfg, u0, master_seed, || rng::brownian_increment(&mut rng, dt)))
}

/// Single trajectory (path 0) for `master_seed`.
pub fn run_trajectory(cfg: &SolverConfig, master_seed: u64) -> Result<TrajectoryRecord, ConfigError> {
    cfg.validate()?;
    Ok(run_path(cfg, master_seed, 0)?.record)
}

/// `μ(t) = exp(λ² t / 2 - λ W(t))`.
pub fn doss_sussmann_mu(t: f64, w: f64, lambda: f64) -> f64 {
    (0.5 * lambda * lambda * t - lambda * w).exp()
}

/// Explicit Euler step of
/// `∂_t v = -[μ⁻¹∇S(v)·∇v - 2μ⁻²v∇S(v)·∇v + μ⁻¹vΔS(v) - μ⁻²v²ΔS(v)]`.
pub fn random_pde_step(
    v: &SpectralField,
    mu: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<SpectralField, StepError> {
    let fail = |e: DynamicsError| StepError::from_dynamics(e, f64::NAN);
    let rhs = random_pde_rhs(v, mu).map_err(fail)?;
    let rhs = rhs
        .galerkin_project(cfg.galerkin_n)
        .map_err(|e| fail(e.into()))?;
    let mut next = v.clone();
    next.add_scaled(&rhs, -dt).map_err(|e| fail(e.into()))?;
    if !next.is_finite() {
        return Err(StepError::NonFinite { t: f64::NAN });
    }
    Ok(next)
}

pub(crate) fn random_pde_rhs(v: &SpectralField, mu: f64) -> Result<SpectralField, DynamicsError> {
    let inputs = DriftInputs::new(v)?;
    let grid = v.grid();
    let ones = vec![1.0; inputs.u.len()];
    let v_sq: Vec<f64> = inputs.u.iter().map(|x| x * x).collect();
    let inv = 1.0 / mu;
    let inv2 = inv * inv;

    let mut rhs = dealiased_product(grid, &ones, &inputs.grad_s_dot_grad_u).scaled(inv);
    rhs.add_scaled(&dealiased_product(grid, &inputs.u, &inputs.grad_s_dot_grad_u), -2.0 * inv2)?;
    rhs.add_scaled(&dealiased_product(grid, &inputs.u, &inputs.lap_s), inv)?;
    rhs.add_scaled(&dealiased_product(grid, &v_sq, &inputs.lap_s), -inv2)?;
    if !rhs.is_finite() {
        return Err(DynamicsError::NonFinite {
            context: "random PDE right-hand side",
        });
    }
    Ok(rhs)
}

/// Direct EM path versus the transformed random-PDE path on one Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformComparison {
    pub times: Vec<f64>,
    /// `‖u_direct - μ⁻¹ v‖_{H^s}` at each sample time.
    pub discrepancies: Vec<f64>,
    pub max_discrepancy: f64,
    pub final_discrepancy: f64,
    /// Set when either path became non-finite; the series stops there.
    pub aborted_at: Option<f64>,
}

/// Runs both schemes on the increments `increments` (step `cfg.dt`); the cut-off is ignored.
pub fn transform_compare_with_increments(
    cfg: &SolverConfig,
    u0: &SpectralField,
    increments: &[f64],
) -> Result<TransformComparison, ConfigError> {
    let lambda = match cfg.noise {
        NoiseModel::Linear { lambda } => lambda,
        _ => return Err(invalid("noise.type", "transform comparison needs linear noise")),
    };
    let mut direct_cfg = cfg.clone();
    direct_cfg.cutoff = CutoffSpec::Unbounded;

    let mut u = u0.clone();
    let mut v = u0.clone();
    let mut w_t = 0.0;
    let mut out = TransformComparison {
        times: vec![0.0],
        discrepancies: vec![0.0],
        max_discrepancy: 0.0,
        final_discrepancy: 0.0,
        aborted_at: None,
    };
    let n = increments.len();
    for (step, &dw) in increments.iter().enumerate() {
        let t_prev = step as f64 * cfg.dt;
        let t = (step + 1) as f64 * cfg.dt;
        let mu = doss_sussmann_mu(t_prev, w_t, lambda);
        let next_u = em_step(&u, t_prev, dw, &direct_cfg);
        let next_v = random_pde_step(&v, mu, cfg.dt, cfg);
        match (next_u, next_v) {
            (Ok(a), Ok(b)) => {
                u = a;
                v = b;
            }
            _ => {
                out.aborted_at = Some(t);
                return Ok(out);
            }
        }
        w_t += dw;
        if (step + 1) % cfg.record_every == 0 || step + 1 == n {
            let mu_t = doss_sussmann_mu(t, w_t, lambda);
            let mut diff = u.clone();
            diff.add_scaled(&v, -1.0 / mu_t)?;
            let d = diff.sobolev_norm(cfg.s);
            out.times.push(t);
            out.discrepancies.push(d);
            out.max_discrepancy = out.max_discrepancy.max(d);
            out.final_discrepancy = d;
        }
    }
    Ok(out)
}

/// [`transform_compare_with_increments`] on path `path_index` of `master_seed`.
pub fn transform_compare(
    cfg: &SolverConfig,
    master_seed: u64,
    path_index: u64,
) -> Result<TransformComparison, ConfigError> {
    cfg.validate()?;
    let u0 = cfg.initial_field(master_seed, path_index)?;
    let mut rng = rng::stream(master_seed, path_index, Purpose::Brownian);
    let increments = rng::brownian_path(&mut rng, cfg.dt, cfg.n_steps());
    transform_compare_with_increments(cfg, &u0, &increments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::drift;

    fn grid1(m: usize) -> TorusGrid {
        TorusGrid::new(1, m).unwrap()
    }

    fn cos_mode(a: f64) -> InitialCondition {
        InitialCondition::SingleMode {
            offset: 0.0,
            amplitude: a,
            wavevector: vec![1],
        }
    }

    #[test]
    fn constant_is_an_equilibrium_of_the_step() {
        let cfg = SolverConfig::new(grid1(32), InitialCondition::Constant { c: 0.3 });
        let u0 = cfg.initial_field(0, 0).unwrap();
        let mut u = u0.clone();
        for k in 0..50 {
            u = em_step(&u, k as f64 * cfg.dt, 0.1, &cfg).unwrap();
        }
        assert_eq!(u, u0);
    }

    #[test]
    fn linear_noise_step_matches_hand_assembly() {
        let mut cfg = SolverConfig::new(grid1(32), cos_mode(1.0));
        cfg.noise = NoiseModel::Linear { lambda: 0.7 };
        let u = cfg.initial_field(0, 0).unwrap();
        let dw = -0.031;
        let got = em_step(&u, 0.0, dw, &cfg).unwrap();
        let g = drift(&u).unwrap();
        let mut expect = u.clone();
        expect.add_scaled(&g, -cfg.dt).unwrap();
        expect.add_scaled(&u, 0.7 * dw).unwrap();
        assert!(got.max_coeff_diff(&expect) < 1e-14);
    }

    #[test]
    fn saturated_cutoff_freezes_noiseless_step() {
        let mut cfg = SolverConfig::new(grid1(32), cos_mode(0.8));
        let u = cfg.initial_field(0, 0).unwrap();
        cfg.cutoff = CutoffSpec::Radius(u.w1inf_norm() / 2.0);
        assert_eq!(em_step(&u, 0.0, 0.5, &cfg).unwrap(), u);
    }

    #[test]
    fn single_mode_builds_cosine() {
        let g = TorusGrid::new(2, 8).unwrap();
        let ic = InitialCondition::SingleMode {
            offset: 0.5,
            amplitude: 0.2,
            wavevector: vec![1, -2],
        };
        let u = ic.build(&g, 2.0, 0, 0).unwrap();
        let vals = u.inverse_transform().unwrap();
        for (i, v) in vals.iter().enumerate() {
            let x = g.coordinates(i);
            assert!((v - (0.5 + 0.2 * (x[0] - 2.0 * x[1]).cos())).abs() < 1e-14);
        }
        let bad = InitialCondition::SingleMode {
            offset: 0.0,
            amplitude: 1.0,
            wavevector: vec![4, 0],
        };
        assert!(bad.build(&g, 2.0, 0, 0).is_err());
    }

    #[test]
    fn random_sobolev_hits_target_norm() {
        for (d, m) in [(1, 64), (2, 16)] {
            let g = TorusGrid::new(d, m).unwrap();
            let ic = InitialCondition::RandomSobolev {
                target_norm: 0.37,
                decay: None,
                seed: Some(11),
            };
            let u = ic.build(&g, 2.5, 0, 0).unwrap();
            assert!((u.sobolev_norm(2.5) - 0.37).abs() < 1e-10);
            assert!(u.hermitian_defect().0 == 0.0);
            assert_eq!(u, ic.build(&g, 2.5, 99, 5).unwrap());
        }
        let per_path = InitialCondition::RandomSobolev {
            target_norm: 1.0,
            decay: None,
            seed: None,
        };
        let g = grid1(32);
        assert_ne!(
            per_path.build(&g, 2.0, 1, 0).unwrap(),
            per_path.build(&g, 2.0, 1, 1).unwrap()
        );
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = SolverConfig::new(grid1(16), cos_mode(0.1));
        cfg.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "dt", .. })));
        cfg.dt = 1e-3;
        cfg.galerkin_n = 9;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "galerkin.n", .. })));
        cfg.galerkin_n = 8;
        cfg.stop_threshold = 0.1;
        let u0 = cfg.initial_field(0, 0).unwrap();
        assert!(matches!(
            cfg.validate_initial(&u0),
            Err(ConfigError::Invalid { field: "stop_threshold", .. })
        ));
    }

    #[test]
    fn step_count_reproduces_horizon() {
        let mut cfg = SolverConfig::new(grid1(16), cos_mode(0.1));
        for (dt, t) in [(1e-3, 1.0), (0.3, 1.0), (1.25e-3, 0.5), (0.1, 0.3)] {
            cfg.dt = dt;
            cfg.t_final = t;
            let n = cfg.n_steps() as f64;
            assert!(n * dt >= t - 1e-9 && n * dt < t + dt);
        }
    }

    #[test]
    fn equilibrium_trajectory_is_flat() {
        let cfg = SolverConfig::new(grid1(32), InitialCondition::Constant { c: 0.3 });
        let rec = run_trajectory(&cfg, 5).unwrap();
        assert_eq!(rec.status, PathStatus::Survived);
        assert_eq!(rec.times.len(), 101);
        let h0 = rec.hs_norms[0];
        assert!(rec.hs_norms.iter().all(|h| (h - h0).abs() < 1e-12));
    }

    #[test]
    fn deterministic_mass_conservation() {
        let mut cfg = SolverConfig::new(grid1(64), cos_mode(0.05));
        cfg.t_final = 0.2;
        let out = run_path(&cfg, 0, 0).unwrap();
        assert_eq!(out.record.status, PathStatus::Survived);
        let u0 = cfg.initial_field(0, 0).unwrap();
        assert!((out.final_field.mean() - u0.mean()).abs() < 1e-10);
    }

    #[test]
    fn mu_examples() {
        assert_eq!(doss_sussmann_mu(0.0, 0.0, 1.3), 1.0);
        assert_eq!(doss_sussmann_mu(3.0, -2.0, 0.0), 1.0);
        assert!((doss_sussmann_mu(2.0, 0.5, 1.0) - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn random_pde_constant_is_fixed() {
        let cfg = SolverConfig::new(grid1(16), InitialCondition::Constant { c: 0.6 });
        let v = cfg.initial_field(0, 0).unwrap();
        assert_eq!(random_pde_step(&v, 2.3, 0.01, &cfg).unwrap(), v);
    }

    #[test]
    fn random_pde_reduces_to_drift_at_unit_mu() {
        let cfg = SolverConfig::new(grid1(32), cos_mode(0.4));
        let v = cfg.initial_field(0, 0).unwrap();
        let got = random_pde_step(&v, 1.0, 0.01, &cfg).unwrap();
        let mut expect = v.clone();
        expect.add_scaled(&drift(&v).unwrap(), -0.01).unwrap();
        assert!(got.max_coeff_diff(&expect) < 1e-15);
    }

    #[test]
    fn random_pde_term_by_term() {
        // Oracle: the four products assembled separately from the Helmholtz solution.
        let cfg = SolverConfig::new(grid1(32), cos_mode(1e-3));
        let mut v = cfg.initial_field(0, 0).unwrap();
        let extra = SpectralField::from_fn(v.grid(), |x| 4e-4 * (2.0 * x[0]).sin()).unwrap();
        v.add_scaled(&extra, 1.0).unwrap();
        let mu = 1.7;
        let dt = 0.02;
        let s = v.bessel_multiplier(-2.0);
        let vals = v.inverse_transform().unwrap();
        let sx = s.partial(0).inverse_transform().unwrap();
        let vx = v.partial(0).inverse_transform().unwrap();
        let ss = s.inverse_transform().unwrap();
        let term = |f: &dyn Fn(usize) -> f64| {
            let samples: Vec<f64> = (0..vals.len()).map(f).collect();
            SpectralField::forward_transform(v.grid(), &samples).unwrap().dealias()
        };
        let lap = |j: usize| ss[j] - vals[j];
        let t1 = term(&|j| sx[j] * vx[j]);
        let t2 = term(&|j| vals[j] * sx[j] * vx[j]);
        let t3 = term(&|j| vals[j] * lap(j));
        let t4 = term(&|j| vals[j] * vals[j] * lap(j));
        let mut expect = t1.scaled(1.0 / mu);
        expect.add_scaled(&t2, -2.0 / (mu * mu)).unwrap();
        expect.add_scaled(&t3, 1.0 / mu).unwrap();
        expect.add_scaled(&t4, -1.0 / (mu * mu)).unwrap();
        let rhs = random_pde_rhs(&v, mu).unwrap();
        let mut defect = rhs.clone();
        defect.add_scaled(&expect, -1.0).unwrap();
        assert!(defect.sobolev_norm(0.0) < 1e-13 * expect.sobolev_norm(0.0));

        let mut stepped = v.clone();
        stepped.add_scaled(&expect, -dt).unwrap();
        let got = random_pde_step(&v, mu, dt, &cfg).unwrap();
        assert!(got.max_coeff_diff(&stepped) < 1e-15 * v.max_abs_coeff());
    }

    #[test]
    fn transform_compare_at_zero_lambda_and_time_zero() {
        let mut cfg = SolverConfig::new(grid1(32), cos_mode(0.2));
        cfg.noise = NoiseModel::Linear { lambda: 0.0 };
        cfg.t_final = 0.2;
        let cmp = transform_compare(&cfg, 3, 0).unwrap();
        assert_eq!(cmp.discrepancies[0], 0.0);
        assert!(cmp.max_discrepancy <= 1e-12, "{}", cmp.max_discrepancy);
        assert!(cmp.aborted_at.is_none());

        cfg.noise = NoiseModel::Zero;
        assert!(transform_compare(&cfg, 3, 0).is_err());
    }
}
