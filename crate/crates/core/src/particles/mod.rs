//! Monte Carlo simulation of the velocity-jump process.

mod ensemble;
mod export;
mod histogram;

pub use ensemble::{
    next_accepted_event, uniform_ball_sample, InitialLaw, ParticleEnsemble, StepReport,
};
pub use export::{read_binary, write_binary, write_csv};
pub use histogram::{phase_histogram, spatial_histogram, SpatialHistogram};
