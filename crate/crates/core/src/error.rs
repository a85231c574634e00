use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gamma = {gamma} too large for confinement certificate (largest admissible gamma = {gamma_max:.12})")]
    CertificateFailed { gamma: f64, gamma_max: f64 },

    #[error("time step {dt} exceeds the positivity limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite value detected at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("no convergence after {iterations} iterations (last residuals: {history:?})")]
    NonConvergence {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("grid mismatch: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
