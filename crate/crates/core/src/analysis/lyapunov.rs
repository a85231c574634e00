use serde::Serialize;

use super::Verdict;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::{DriftCertificate, WeightSpec};
use crate::semigroup::{evolve_with, DtPolicy, Generator, OperatorTag};

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub gamma: f64,
    pub beta: f64,
    pub times: Vec<f64>,
    /// `W(t) = sum |f| m~`.
    pub w: Vec<f64>,
    /// `max((A/alpha) mass(|f0|), W(0))`.
    pub bound: f64,
    /// Relative tolerance used at each recorded time.
    pub tolerance: Vec<f64>,
    pub max_ratio: f64,
    pub verdict: Verdict,
}

pub(crate) fn tilde_functional(f: &DistributionField, w: &WeightSpec) -> f64 {
    let grid = f.grid();
    let dim = grid.dim();
    f.weighted_sum(|cell, j, v| {
        let pos = grid.position(cell);
        v.abs() * w.eval(&pos[..dim], grid.velocity(j))
    })
}

/// Evolves `f0` under `gen` (tag L) and checks the uniform bound on `sum |f| m~`.
pub fn lyapunov_monitor(
    gen: &Generator,
    f0: &DistributionField,
    certificate: &DriftCertificate,
    horizon: f64,
    record_every: f64,
    policy: DtPolicy,
) -> Result<LyapunovReport> {
    if gen.tag() != OperatorTag::L {
        return Err(Error::Domain(format!(
            "Lyapunov monitor needs tag L, got {:?}",
            gen.tag()
        )));
    }
    if !(certificate.alpha > 0.0) || certificate.gamma >= certificate.gamma_max {
        return Err(Error::CertificateFailed {
            gamma: certificate.gamma,
            gamma_max: certificate.gamma_max,
        });
    }
    let weight = WeightSpec::TildeExp {
        gamma: certificate.gamma,
        beta: certificate.beta,
    };
    let abs_mass0 = f0.weighted_sum(|_, _, v| v.abs());
    let w0 = tilde_functional(f0, &weight);
    let bound = (certificate.moment_constant() * abs_mass0).max(w0);
    let mut times = Vec::new();
    let mut w = Vec::new();
    let mut tolerance = Vec::new();
    evolve_with(gen, f0, horizon, record_every, policy, |t, f, stats| {
        times.push(t);
        w.push(tilde_functional(f, &weight));
        tolerance.push(1e-6 + stats.leak.abs() / abs_mass0.max(f64::MIN_POSITIVE));
        Ok(())
    })?;
    let mut ok = true;
    let mut max_ratio: f64 = 0.0;
    for (wt, tol) in w.iter().zip(&tolerance) {
        max_ratio = max_ratio.max(wt / bound);
        if *wt > bound * (1.0 + tol) {
            ok = false;
        }
    }
    Ok(LyapunovReport {
        gamma: certificate.gamma,
        beta: certificate.beta,
        times,
        w,
        bound,
        tolerance,
        max_ratio,
        verdict: Verdict::from_bool(ok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        drift_certificate, model_constants, tilde_dual, DriftProbe, GridSpec, KernelSpec, PhaseGrid,
    };
    use crate::semigroup::Scheme;
    use std::sync::Arc;

    fn setup() -> (Generator, DriftCertificate) {
        let g = Arc::new(PhaseGrid::new(GridSpec::line(30.0, 300, 16)).unwrap());
        let gen = Generator::assemble(
            OperatorTag::L,
            g,
            KernelSpec::sharp(0.5, 0.5).unwrap(),
            Scheme::Upwind,
        )
        .unwrap();
        let c = model_constants(0.5, 1).unwrap();
        let probe = DriftProbe::log_spaced(1, 200, 1e-3, 60.0, 64).unwrap();
        (gen, drift_certificate(&c, 0.1, &probe).unwrap())
    }

    #[test]
    fn generic_initial_data_pass() {
        let (gen, cert) = setup();
        let f0 = DistributionField::from_fn(gen.grid().clone(), |x, v| {
            (-(x[0] - 3.0).powi(2)).exp() * (1.0 + v[0])
        });
        let r = lyapunov_monitor(&gen, &f0, &cert, 40.0, 1.0, DtPolicy::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.w.len(), 41);
    }

    #[test]
    fn far_blob_decreases_initially() {
        let (gen, cert) = setup();
        let c = model_constants(0.5, 1).unwrap();
        let grid = gen.grid().clone();
        let x0 = 15.0;
        // sign of the averaged dual weight at the blob location predicts the initial trend
        let dual: f64 = (0..grid.n_v())
            .map(|j| {
                grid.v_weights()[j] * tilde_dual(&c, cert.gamma, cert.beta, &[x0], grid.velocity(j))
            })
            .sum();
        assert!(dual < 0.0);
        let f0 = DistributionField::from_fn(grid, |x, _| (-(x[0] - x0).powi(2) * 4.0).exp());
        let r = lyapunov_monitor(&gen, &f0, &cert, 2.0, 0.5, DtPolicy::default()).unwrap();
        assert!(r.w[1] < r.w[0] && r.w[2] < r.w[1]);
    }

    #[test]
    fn rejects_wrong_tag() {
        let (gen, cert) = setup();
        let b0 = Generator::assemble(
            OperatorTag::B0,
            gen.grid().clone(),
            *gen.kernel(),
            Scheme::Upwind,
        )
        .unwrap();
        let f0 = DistributionField::zeros(gen.grid().clone());
        assert!(lyapunov_monitor(&b0, &f0, &cert, 1.0, 1.0, DtPolicy::default()).is_err());
    }
}
