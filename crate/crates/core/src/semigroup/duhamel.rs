use super::evolve::{evolve_with, DtPolicy};
use super::exact::b0_evolve_exact;
use super::generator::Generator;
use crate::error::{Error, Result};
use crate::field::DistributionField;

/// A semigroup that can advance a field by a time increment.
pub trait Propagator {
    fn advance(&self, f: &DistributionField, dt: f64) -> Result<DistributionField>;
}

/// SSP-RK3 integration of a discrete generator.
pub struct GeneratorPropagator<'a> {
    pub generator: &'a Generator,
    pub policy: DtPolicy,
}

impl Propagator for GeneratorPropagator<'_> {
    fn advance(&self, f: &DistributionField, dt: f64) -> Result<DistributionField> {
        if dt == 0.0 {
            return Ok(f.clone());
        }
        Ok(evolve_with(self.generator, f, dt, dt, self.policy, |_, _, _| Ok(()))?.0)
    }
}

/// Exact characteristics for the transport-with-loss semigroup.
pub struct ExactB0Propagator {
    pub chi: f64,
}

impl Propagator for ExactB0Propagator {
    fn advance(&self, f: &DistributionField, dt: f64) -> Result<DistributionField> {
        b0_evolve_exact(f, dt, self.chi)
    }
}

/// Trapezoidal approximation of `int_0^t S_outer(t - s) C g(s) ds` on a uniform time grid.
///
/// `inner` holds `g(t_k)` (typically `S_inner(t_k) f`) at `times`; the result holds the
/// convolution at the same times. Uses the recursion
/// `u_{k+1} = S(dt) u_k + dt/2 (S(dt) C g_k + C g_{k+1})`, which reproduces the
/// composite trapezoid rule.
pub fn duhamel_convolve(
    outer: &dyn Propagator,
    coupling: &dyn Fn(&DistributionField) -> Result<DistributionField>,
    times: &[f64],
    inner: &[DistributionField],
) -> Result<Vec<DistributionField>> {
    if times.len() != inner.len() || times.is_empty() {
        return Err(Error::Mismatch(format!(
            "{} times for {} inner fields",
            times.len(),
            inner.len()
        )));
    }
    if times[0] != 0.0 {
        return Err(Error::Mismatch("time grid must start at 0".into()));
    }
    let dt = if times.len() > 1 {
        times[1] - times[0]
    } else {
        0.0
    };
    for w in times.windows(2) {
        if !(w[1] > w[0]) || ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
            return Err(Error::Mismatch(
                "time grid must be uniform and increasing".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(times.len());
    let mut u = DistributionField::zeros(inner[0].grid().clone());
    let mut source = coupling(&inner[0])?;
    out.push(u.clone());
    for g in &inner[1..] {
        let next = coupling(g)?;
        let mut advanced = outer.advance(&u, dt)?;
        let pushed = outer.advance(&source, dt)?;
        advanced.axpy(0.5 * dt, &pushed)?;
        advanced.axpy(0.5 * dt, &next)?;
        u = advanced;
        source = next;
        out.push(u.clone());
    }
    Ok(out)
}
