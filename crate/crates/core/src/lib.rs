//! Pseudo-spectral simulation of the stochastic hyperbolic Keller–Segel
//! equation on the periodic torus.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod experiments;
pub mod integrator;
pub mod rng;
pub mod spectral;

pub use dynamics::{CutoffSpec, NoiseModel};
pub use integrator::{InitialCondition, PathStatus, SolverConfig, TrajectoryRecord};
pub use spectral::{SpectralField, TorusGrid};
