//! Discrete generators, time integration and exactly solvable transport semigroups.

mod blocktri;
mod duhamel;
mod evolve;
mod exact;
mod generator;

pub use blocktri::ShiftedBlockSolver;
pub use duhamel::{duhamel_convolve, ExactB0Propagator, GeneratorPropagator, Propagator};
pub use evolve::{evolve, evolve_with, DtPolicy, EvolutionTrace, Functional, StepStats};
pub use exact::{
    averaging_apply, b0_evolve_exact, b0_evolve_exact_weighted, damping_integral,
    transport_damped_evolve, Boundary,
};
pub use generator::{Generator, OperatorTag, Scheme};
