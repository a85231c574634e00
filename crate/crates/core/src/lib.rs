//! Numerical toolkit for the linear run-and-tumble kinetic equation.
//!
//! The crate is split along the lines of the computation:
//!
//! * [`model`] holds the phase-space grid, turning kernels, weight functions
//!   and the closed-form constants of the model.
//! * [`semigroup`] assembles discrete generators, integrates them in time and
//!   evaluates the exactly solvable transport semigroups.
//! * [`particles`] simulates the underlying velocity-jump process.
//! * [`analysis`] contains norms, moments, decay fits and the probes that
//!   compare the numerics against the theory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod field;
pub mod model;
pub mod particles;
pub mod semigroup;

pub use error::{Error, Result};
pub use field::DistributionField;
pub use model::{KernelSpec, KernelVariant, ModelConstants, PhaseGrid, VelocitySet, WeightSpec};

/// Euclidean dot product of two equally sized slices.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
