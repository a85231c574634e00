use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::{dot, norm};

/// Radius of the centred velocity ball with unit volume.
pub fn v0(dim: usize) -> f64 {
    match dim {
        1 => 0.5,
        2 => PI.powf(-0.5),
        3 => (3.0 / (4.0 * PI)).cbrt(),
        _ => f64::NAN,
    }
}

/// First absolute moment of one velocity component over the unit-volume ball.
pub fn v1(dim: usize) -> f64 {
    match dim {
        1 => 0.25,
        2 => 4.0 / (3.0 * PI.powf(1.5)),
        3 => PI * v0(3).powi(4) / 2.0,
        _ => f64::NAN,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConstants {
    pub chi: f64,
    pub dim: usize,
    pub v0: f64,
    pub v1: f64,
    /// Dispersion threshold `(1 - chi) / v0`.
    pub gamma_star: f64,
}

impl ModelConstants {
    /// Decay exponent of the damped transport in the weight `exp(gamma <x>)`.
    pub fn a_star(&self, gamma: f64) -> f64 {
        self.chi + gamma * self.v0 - 1.0
    }
}

pub fn model_constants(chi: f64, dim: usize) -> Result<ModelConstants> {
    if !(chi > 0.0 && chi < 1.0) {
        return Err(Error::Domain(format!("chi must lie in (0,1), got {chi}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::Domain(format!(
            "dimension must be 1, 2 or 3, got {dim}"
        )));
    }
    let speed = v0(dim);
    Ok(ModelConstants {
        chi,
        dim,
        v0: speed,
        v1: v1(dim),
        gamma_star: (1.0 - chi) / speed,
    })
}

/// Coupling of the corrected exponential weight: `beta (1 + chi) = gamma chi`.
pub fn tilde_weight_beta(chi: f64, gamma: f64) -> f64 {
    gamma * chi / (1.0 + chi)
}

fn twice_alpha(c: &ModelConstants, gamma: f64) -> f64 {
    let beta = tilde_weight_beta(c.chi, gamma);
    beta * (1.0 - c.chi) * c.v1 - gamma * gamma * c.v0 * c.v0 - beta * gamma * c.v0 * c.v0
}

/// Largest gamma with a positive drift rate, located by bisection on `2 alpha(gamma)`.
pub fn largest_certified_gamma(c: &ModelConstants) -> f64 {
    // 2 alpha is a downward parabola in gamma vanishing at 0; bracket its positive root.
    let mut hi = 1.0;
    while twice_alpha(c, hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if twice_alpha(c, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Closed form of the adjoint generator applied to the corrected exponential weight
/// `(1 + gamma v.x/<x> - beta |v.x|/<x>) exp(gamma <x>)`.
pub fn tilde_dual(c: &ModelConstants, gamma: f64, beta: f64, x: &[f64], v: &[f64]) -> f64 {
    let r2 = dot(x, x);
    let bracket = (1.0 + r2).sqrt();
    let s = dot(x, v);
    let zeta = if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    };
    let vv = dot(v, v);
    let curv = vv / bracket - s * s / bracket.powi(3);
    let t1 = gamma * (curv + gamma * s * s / (bracket * bracket) - c.chi * s.abs() / bracket);
    let t2 = -beta * zeta * (curv + gamma * s * s / (bracket * bracket));
    let t3 = -beta * (1.0 + c.chi * zeta) * (c.v1 * r2.sqrt() - s.abs()) / bracket;
    (t1 + t2 + t3) * (gamma * bracket).exp()
}

fn tilde_value(gamma: f64, beta: f64, x: &[f64], v: &[f64]) -> f64 {
    let bracket = (1.0 + dot(x, x)).sqrt();
    let s = dot(x, v);
    (1.0 + (gamma * s - beta * s.abs()) / bracket) * (gamma * bracket).exp()
}

/// Probe nodes for the drift inequality: log-spaced radii on both sides of the origin
/// (along the first axis) crossed with a velocity set.
#[derive(Debug, Clone)]
pub struct DriftProbe {
    pub radii: Vec<f64>,
    pub velocities: Vec<Vec<f64>>,
    pub dim: usize,
}

impl DriftProbe {
    /// `n_radii` log-spaced radii in `[r_min, r_max]` plus the origin, with a
    /// midpoint velocity grid (dim 1) or polar grid (dim 2) of the given resolution
    /// including the extreme speeds.
    pub fn log_spaced(
        dim: usize,
        n_radii: usize,
        r_min: f64,
        r_max: f64,
        n_v: usize,
    ) -> Result<Self> {
        if n_radii < 2 || !(r_min > 0.0 && r_max > r_min) {
            return Err(Error::Domain(
                "drift probe needs at least two radii with 0 < r_min < r_max".into(),
            ));
        }
        let ratio = (r_max / r_min).ln() / (n_radii - 1) as f64;
        let mut radii = vec![0.0];
        radii.extend((0..n_radii).map(|k| r_min * (ratio * k as f64).exp()));
        let speed = v0(dim);
        let mut velocities = Vec::new();
        match dim {
            1 => {
                velocities.push(vec![-speed]);
                for j in 0..n_v {
                    velocities.push(vec![-speed + (j as f64 + 0.5) * 2.0 * speed / n_v as f64]);
                }
                velocities.push(vec![0.0]);
                velocities.push(vec![speed]);
            }
            2 => {
                velocities.push(vec![0.0, 0.0]);
                let n_theta = 4 * n_v.max(1);
                for k in 1..=n_v {
                    let r = speed * k as f64 / n_v as f64;
                    for m in 0..n_theta {
                        let th = 2.0 * PI * m as f64 / n_theta as f64;
                        velocities.push(vec![r * th.cos(), r * th.sin()]);
                    }
                }
            }
            _ => {
                return Err(Error::Domain(format!(
                    "drift probe supports dim 1 or 2, got {dim}"
                )))
            }
        }
        Ok(Self {
            radii,
            velocities,
            dim,
        })
    }

    /// Same velocity set, radii replaced by the geometric midpoints of consecutive radii.
    pub fn refined(&self) -> Self {
        let radii = self
            .radii
            .windows(2)
            .map(|w| {
                if w[0] == 0.0 {
                    0.5 * w[1]
                } else {
                    (w[0] * w[1]).sqrt()
                }
            })
            .collect();
        Self {
            radii,
            velocities: self.velocities.clone(),
            dim: self.dim,
        }
    }

    fn positions(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let dim = self.dim;
        self.radii.iter().flat_map(move |&r| {
            let mut pos = vec![0.0; dim];
            pos[0] = r;
            let mut neg = pos.clone();
            neg[0] = -r;
            [pos, neg]
        })
    }

    pub fn len(&self) -> usize {
        2 * self.radii.len() * self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Drift certificate for the corrected exponential weight.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCertificate {
    pub chi: f64,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Supremum of `L* m + alpha m` over the probe nodes.
    pub a_sup: f64,
    /// Position norm and velocity where the supremum is attained.
    pub argmax_radius: f64,
    pub argmax_velocity: Vec<f64>,
    /// Largest gamma with positive alpha, from bisection.
    pub gamma_max: f64,
    pub probe_nodes: usize,
}

impl DriftCertificate {
    /// Number of probe nodes with `L* m > A - alpha m`.
    pub fn violations(&self, consts: &ModelConstants, probe: &DriftProbe) -> usize {
        let mut count = 0;
        for x in probe.positions() {
            for v in &probe.velocities {
                let lhs = tilde_dual(consts, self.gamma, self.beta, &x, v)
                    + self.alpha * tilde_value(self.gamma, self.beta, &x, v);
                if lhs > self.a_sup {
                    count += 1;
                }
            }
        }
        count
    }

    /// Ratio `A / alpha`, the constant in the uniform moment bound.
    pub fn moment_constant(&self) -> f64 {
        self.a_sup / self.alpha
    }
}

pub fn drift_certificate(
    consts: &ModelConstants,
    gamma: f64,
    probe: &DriftProbe,
) -> Result<DriftCertificate> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if probe.dim != consts.dim {
        return Err(Error::Mismatch(format!(
            "probe dimension {} vs model dimension {}",
            probe.dim, consts.dim
        )));
    }
    let gamma_max = largest_certified_gamma(consts);
    let alpha = 0.5 * twice_alpha(consts, gamma);
    if !(alpha > 0.0) {
        return Err(Error::CertificateFailed { gamma, gamma_max });
    }
    let beta = tilde_weight_beta(consts.chi, gamma);
    let mut best = (f64::NEG_INFINITY, 0.0, Vec::new());
    for x in probe.positions() {
        for v in &probe.velocities {
            let val =
                tilde_dual(consts, gamma, beta, &x, v) + alpha * tilde_value(gamma, beta, &x, v);
            if val > best.0 {
                best = (val, norm(&x), v.clone());
            }
        }
    }
    Ok(DriftCertificate {
        chi: consts.chi,
        gamma,
        beta,
        alpha,
        a_sup: best.0,
        argmax_radius: best.1,
        argmax_velocity: best.2,
        gamma_max,
        probe_nodes: probe.len(),
    })
}

/// Comparison rate in the convergence estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaRate {
    /// `<t>^(-ell)` for a polynomial weight of order `k`.
    Polynomial { k: f64, ell: f64 },
    /// `exp(a t)` with `a` between `a_star` and zero.
    Exponential { a: f64, a_star: f64 },
}

pub fn theta_rate(rate: ThetaRate, t: f64) -> Result<f64> {
    match rate {
        ThetaRate::Polynomial { k, ell } => {
            if !(ell > 0.0 && ell < k) {
                return Err(Error::Domain(format!(
                    "need 0 < ell < k, got ell = {ell}, k = {k}"
                )));
            }
            Ok((1.0 + t * t).sqrt().powf(-ell))
        }
        ThetaRate::Exponential { a, a_star } => {
            if !(a > a_star && a < 0.0) {
                return Err(Error::Domain(format!(
                    "need a_star < a < 0, got a = {a}, a_star = {a_star}"
                )));
            }
            Ok((a * t).exp())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constants_for_default_model() {
        let c = model_constants(0.5, 1).unwrap();
        assert_relative_eq!(c.gamma_star, 1.0, epsilon = 1e-15);
        assert_relative_eq!(c.a_star(0.1), -0.45, epsilon = 1e-15);
        assert_eq!(c.v0, 0.5);
        assert_eq!(c.v1, 0.25);
    }

    #[test]
    fn v1_planar_matches_polar_quadrature() {
        // r^2 |cos theta| integrated over the disc of radius v0, midpoint rule in both variables
        let r0 = v0(2);
        let (nr, nt) = (2000, 4000);
        let mut acc = 0.0;
        for i in 0..nr {
            let r = (i as f64 + 0.5) * r0 / nr as f64;
            for k in 0..nt {
                let th = (k as f64 + 0.5) * 2.0 * PI / nt as f64;
                acc += r * r * th.cos().abs();
            }
        }
        acc *= (r0 / nr as f64) * (2.0 * PI / nt as f64);
        assert_relative_eq!(acc, 0.239_449_5, epsilon = 1e-6);
        assert_relative_eq!(v1(2), acc, max_relative = 1e-6);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(model_constants(1.0, 1).is_err());
        assert!(model_constants(0.0, 2).is_err());
        assert!(model_constants(0.5, 4).is_err());
    }

    fn default_probe() -> DriftProbe {
        DriftProbe::log_spaced(1, 400, 1e-3, 1e3, 64).unwrap()
    }

    #[test]
    fn certificate_for_default_gamma() {
        let c = model_constants(0.5, 1).unwrap();
        let cert = drift_certificate(&c, 0.1, &default_probe()).unwrap();
        assert_relative_eq!(cert.beta, 1.0 / 30.0, epsilon = 1e-15);
        let two_alpha = (1.0 / 30.0) * 0.5 * 0.25 - 0.01 * 0.25 - (1.0 / 30.0) * 0.1 * 0.25;
        assert_relative_eq!(cert.alpha, 0.5 * two_alpha, epsilon = 1e-15);
        assert_relative_eq!(cert.alpha, 4.1667e-4, epsilon = 1e-7);
        assert!(cert.a_sup > 0.0);
        assert_eq!(cert.violations(&c, &default_probe()), 0);
    }

    #[test]
    fn certificate_fails_for_large_gamma_and_names_bound() {
        let c = model_constants(0.5, 1).unwrap();
        match drift_certificate(&c, 0.9, &default_probe()) {
            Err(Error::CertificateFailed { gamma_max, .. }) => {
                // root of 2 alpha(gamma): chi (1 - chi) v1 / (v0^2 (1 + 2 chi))
                assert_relative_eq!(gamma_max, 0.125, epsilon = 1e-12);
            }
            other => panic!("expected certificate failure, got {other:?}"),
        }
    }

    #[test]
    fn certificate_vanishes_with_gamma() {
        let c = model_constants(0.5, 1).unwrap();
        let probe = default_probe();
        let a = drift_certificate(&c, 1e-2, &probe).unwrap();
        let b = drift_certificate(&c, 1e-4, &probe).unwrap();
        assert!(b.alpha < a.alpha && b.alpha > 0.0);
        assert!(b.a_sup < a.a_sup && b.a_sup > 0.0);
        assert!(b.a_sup < 1e-3);
    }

    /// Adjoint generator by finite differences in x and quadrature over v'.
    fn dual_by_quadrature(c: &ModelConstants, gamma: f64, beta: f64, x: f64, v: f64) -> f64 {
        let m = |x: f64, v: f64| tilde_value(gamma, beta, &[x], &[v]);
        let h = 1e-5;
        let transport = v * (m(x + h, v) - m(x - h, v)) / (2.0 * h);
        let n = 200_000;
        let avg: f64 = (0..n)
            .map(|j| m(x, -0.5 + (j as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        let k = 1.0 + c.chi * (x * v).signum();
        transport + k * (avg - m(x, v))
    }

    #[test]
    fn closed_form_dual_matches_quadrature() {
        let c = model_constants(0.5, 1).unwrap();
        let (gamma, beta) = (0.1, 1.0 / 30.0);
        for &(x, v) in &[
            (0.7, 0.3),
            (-2.0, 0.41),
            (5.0, -0.2),
            (12.0, 0.05),
            (-0.3, -0.45),
        ] {
            let exact = tilde_dual(&c, gamma, beta, &[x], &[v]);
            let approx = dual_by_quadrature(&c, gamma, beta, x, v);
            assert_relative_eq!(exact, approx, epsilon = 1e-7, max_relative = 1e-6);
        }
    }

    #[test]
    fn theta_rates() {
        let p = ThetaRate::Polynomial { k: 2.0, ell: 1.0 };
        assert_relative_eq!(
            theta_rate(p, 3.0).unwrap(),
            10f64.powf(-0.5),
            epsilon = 1e-15
        );
        let e = ThetaRate::Exponential {
            a: -0.2,
            a_star: -0.45,
        };
        assert_eq!(theta_rate(e, 0.0).unwrap(), 1.0);
        assert_relative_eq!(theta_rate(e, 5.0).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        assert!(theta_rate(ThetaRate::Polynomial { k: 1.0, ell: 1.0 }, 1.0).is_err());
        assert!(theta_rate(
            ThetaRate::Exponential {
                a: -0.5,
                a_star: -0.45
            },
            1.0
        )
        .is_err());
    }
}
