//! Functionals, decay fits and the numerical probes built on them.

mod averaging;
mod fit;
mod hypo;
mod lyapunov;
mod moments;
mod norms;
mod probes;
mod spectral;
mod steady;

use serde::{Deserialize, Serialize};

pub use averaging::{
    averaging_functional, averaging_probe, averaging_ratio, hhalf_seminorm, zero_pad,
    AveragingOptions, AveragingReport,
};
pub use fit::{fit_decay, fit_decay_auto, FitMode, RateFit};
pub use hypo::{hypo_norms, x_norm, HypoNorms, HypoOptions};
pub use lyapunov::{lyapunov_monitor, LyapunovReport};
pub use moments::{moments, Moments};
pub use norms::{mass, weighted_norm, NormKind, NormReport};
pub use probes::{
    b0_contraction_probe, b1_dissipation_probe, b1_poly_decay_probe, dispersion_probe,
    ContractionReport, DispersionOptions, DispersionReport, DissipationReport, PolyDecayReport,
};
pub use spectral::{
    krylov_rightmost, project_out, spectral_gap, GapReport, KrylovOptions, KrylovReport,
    KrylovTransform,
};
pub use steady::{
    agreement_bound, steady_state, two_velocity_exact, SteadyMethod, SteadyOptions, SteadyState,
};

/// Outcome of a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }

    pub fn and(self, other: Verdict) -> Verdict {
        Verdict::from_bool(self.passed() && other.passed())
    }
}
