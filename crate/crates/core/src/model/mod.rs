//! Phase-space discretization, turning kernels, weights and model constants.

mod constants;
mod grid;
mod kernel;
mod weight;

pub use constants::{
    drift_certificate, largest_certified_gamma, model_constants, theta_rate, tilde_dual,
    tilde_weight_beta, v0, v1, DriftCertificate, DriftProbe, ModelConstants, ThetaRate,
};
pub use grid::{GridSpec, PhaseGrid, VelocitySet};
pub use kernel::{
    cutoff_phi, cutoff_profile, regularized_sign, sharp_sign, KernelSpec, KernelVariant,
};
pub use weight::{japanese_bracket, WeightSpec};
