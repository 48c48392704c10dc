//! Right-hand side of the stochastic hyperbolic Keller–Segel system
//!
//! ```text
//! du = -G(u) dt + σ(u) dW,   G(u) = (1-2u)∇S·∇u + (u-u²)ΔS,   S = (1-Δ)^{-1} u
//! ```
//!
//! `G(u)` equals `∇·(u(1-u)∇S)`; both algebraic forms are provided so they
//! can be checked against each other. `ΔS` is always evaluated as `S - u`.

use thiserror::Error;

use crate::spectral::{dealiased_product, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("cut-off evaluated at negative argument {0}")]
    NegativeArgument(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Noise coefficient `σ(u)` multiplying a single scalar Brownian increment.
///
/// `Nonlinear` stands for `Σ_i c_i (1+‖u‖_{W^{1,∞}})^δ u dW_i`; since every
/// `W_i` drives the same field shape, the sum equals in law
/// `c_eff (1+‖u‖_{W^{1,∞}})^δ u dŴ` with `c_eff = (Σ c_i²)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Zero,
    Linear { lambda: f64 },
    Nonlinear { delta: f64, c_eff: f64 },
}

impl NoiseModel {
    /// Builds a nonlinear model from the individual intensities `c_i`.
    pub fn from_intensities(delta: f64, c: &[f64]) -> Self {
        let c_eff = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if c_eff == 0.0 {
            NoiseModel::Zero
        } else {
            NoiseModel::Nonlinear { delta, c_eff }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            NoiseModel::Zero => true,
            NoiseModel::Linear { lambda } => lambda == 0.0,
            NoiseModel::Nonlinear { c_eff, .. } => c_eff == 0.0,
        }
    }

    /// Scalar factor `σ(u) = factor · u` given `‖u‖_{W^{1,∞}}`.
    pub fn factor(&self, w1inf: f64) -> f64 {
        match *self {
            NoiseModel::Zero => 0.0,
            NoiseModel::Linear { lambda } => lambda,
            NoiseModel::Nonlinear { delta, c_eff } => c_eff * (1.0 + w1inf).powf(delta),
        }
    }
}

/// Radius of the cut-off `θ_R`, or no truncation at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffSpec {
    Unbounded,
    Radius(f64),
}

/// `θ_R(x)`: 1 on `[0, R]`, 0 on `[2R, ∞)`, quintic smoothstep in between.
pub fn cutoff_theta(x: f64, spec: CutoffSpec) -> Result<f64, DynamicsError> {
    if x < 0.0 || x.is_nan() {
        return Err(DynamicsError::NegativeArgument(x));
    }
    let r = match spec {
        CutoffSpec::Unbounded => return Ok(1.0),
        CutoffSpec::Radius(r) => r,
    };
    if x <= r {
        return Ok(1.0);
    }
    if x >= 2.0 * r {
        return Ok(0.0);
    }
    let t = (x - r) / r;
    let step = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    Ok(1.0 - step)
}

/// `S = (1-Δ)^{-1} u`.
pub fn helmholtz_solve(u: &SpectralField) -> SpectralField {
    u.bessel_multiplier(-2.0)
}

fn check(values: &[f64], context: &'static str) -> Result<(), DynamicsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite { context })
    }
}

/// Real-space quantities shared by every drift evaluation.
pub(crate) struct DriftInputs {
    pub u: Vec<f64>,
    pub lap_s: Vec<f64>,
    pub grad_s_dot_grad_u: Vec<f64>,
    pub grad_s: Vec<Vec<f64>>,
}

impl DriftInputs {
    pub fn new(u: &SpectralField) -> Result<Self, DynamicsError> {
        let s = helmholtz_solve(u);
        let mut lap = s.clone();
        lap.add_scaled(u, -1.0)?;

        let u_vals = u.to_values();
        check(&u_vals, "drift input")?;
        let grad_u: Vec<Vec<f64>> = u.gradient().iter().map(|g| g.to_values()).collect();
        let grad_s: Vec<Vec<f64>> = s.gradient().iter().map(|g| g.to_values()).collect();
        let mut dot = vec![0.0; u_vals.len()];
        for (gs, gu) in grad_s.iter().zip(&grad_u) {
            for ((d, a), b) in dot.iter_mut().zip(gs).zip(gu) {
                *d += a * b;
            }
        }
        Ok(Self {
            u: u_vals,
            lap_s: lap.to_values(),
            grad_s_dot_grad_u: dot,
            grad_s,
        })
    }
}

/// `G(u) = (1-2u)∇S·∇u + (u-u²)ΔS`, each pointwise product dealiased.
pub fn drift(u: &SpectralField) -> Result<SpectralField, DynamicsError> {
    let inputs = DriftInputs::new(u)?;
    let grid = u.grid();
    let ones = vec![1.0; inputs.u.len()];
    let logistic: Vec<f64> = inputs.u.iter().map(|v| v - v * v).collect();

    let mut g = dealiased_product(grid, &ones, &inputs.grad_s_dot_grad_u);
    g.add_scaled(&dealiased_product(grid, &inputs.u, &inputs.grad_s_dot_grad_u), -2.0)?;
    g.add_scaled(&dealiased_product(grid, &logistic, &inputs.lap_s), 1.0)?;
    if !g.is_finite() {
        return Err(DynamicsError::NonFinite { context: "drift" });
    }
    Ok(g)
}

/// `∇·(u(1-u)∇S)` with the flux dealiased before the spectral divergence.
pub fn drift_divergence_form(u: &SpectralField) -> Result<SpectralField, DynamicsError> {
    let inputs = DriftInputs::new(u)?;
    let grid = u.grid();
    let logistic: Vec<f64> = inputs.u.iter().map(|v| v - v * v).collect();
    let flux: Vec<SpectralField> = inputs
        .grad_s
        .iter()
        .map(|gs| dealiased_product(grid, &logistic, gs))
        .collect();
    let g = SpectralField::divergence(&flux)?;
    if !g.is_finite() {
        return Err(DynamicsError::NonFinite {
            context: "divergence-form drift",
        });
    }
    Ok(g)
}

/// `θ_R(‖u‖_{W^{1,∞}}) P_n G(u)`.
pub fn truncated_drift(
    u: &SpectralField,
    spec: CutoffSpec,
    n: usize,
) -> Result<SpectralField, DynamicsError> {
    truncated_drift_with_norm(u, u.w1inf_norm(), spec, n)
}

pub(crate) fn truncated_drift_with_norm(
    u: &SpectralField,
    w1inf: f64,
    spec: CutoffSpec,
    n: usize,
) -> Result<SpectralField, DynamicsError> {
    let theta = cutoff_theta(w1inf, spec)?;
    if theta == 0.0 {
        u.galerkin_project(n)?;
        return Ok(SpectralField::zeros(u.grid()));
    }
    let g = drift(u)?.galerkin_project(n)?;
    Ok(if theta == 1.0 { g } else { g.scaled(theta) })
}

/// `σ(u)` for the given model; the result multiplies one scalar increment.
pub fn diffusion_coefficient(u: &SpectralField, model: NoiseModel) -> SpectralField {
    let w1inf = match model {
        NoiseModel::Nonlinear { .. } => u.w1inf_norm(),
        _ => 0.0,
    };
    diffusion_coefficient_with_norm(u, w1inf, model)
}

pub(crate) fn diffusion_coefficient_with_norm(
    u: &SpectralField,
    w1inf: f64,
    model: NoiseModel,
) -> SpectralField {
    match model {
        NoiseModel::Zero => SpectralField::zeros(u.grid()),
        _ => u.scaled(model.factor(w1inf)),
    }
}
