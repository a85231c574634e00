use serde::{Deserialize, Serialize};

use super::constants::tilde_weight_beta;
use super::grid::PhaseGrid;
use super::kernel::cutoff_profile;
use crate::error::{Error, Result};
use crate::{dot, norm};

/// `<x> = sqrt(1 + |x|^2)`.
#[inline]
pub fn japanese_bracket(x: &[f64]) -> f64 {
    (1.0 + dot(x, x)).sqrt()
}

/// Phase-space weight functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Exponential {
        gamma: f64,
    },
    Polynomial {
        k: f64,
    },
    /// Exponential weight with first-order velocity corrections.
    TildeExp {
        gamma: f64,
        beta: f64,
    },
    /// Polynomial weight `<gamma x>^q` with first-order velocity corrections.
    TildePoly {
        q: f64,
        gamma: f64,
        beta: f64,
    },
    Mu,
    Nu,
}

impl WeightSpec {
    /// Corrected exponential weight with the coupling `beta (1 + chi) = gamma chi`.
    pub fn tilde_exp(chi: f64, gamma: f64) -> Self {
        WeightSpec::TildeExp {
            gamma,
            beta: tilde_weight_beta(chi, gamma),
        }
    }

    /// Sandwich constant `delta = (gamma + beta) v0` for the corrected exponential weight.
    pub fn sandwich_delta(&self, v0: f64) -> Option<f64> {
        match *self {
            WeightSpec::TildeExp { gamma, beta } => Some((gamma + beta) * v0),
            _ => None,
        }
    }

    /// Checks parameter constraints against the model and, for the corrected
    /// exponential weight, the two-sided bound against `exp(gamma <x>)` on every grid node.
    pub fn validate(&self, chi: f64, grid: &PhaseGrid) -> Result<()> {
        let v0 = grid.speed();
        match *self {
            WeightSpec::Exponential { gamma } => {
                let gamma_star = (1.0 - chi) / v0;
                if !(gamma >= 0.0 && gamma < gamma_star) {
                    return Err(Error::Config(format!(
                        "gamma must lie in [0, {gamma_star}), got {gamma}"
                    )));
                }
            }
            WeightSpec::Polynomial { k } => {
                if !(k >= 0.0) {
                    return Err(Error::Config(format!(
                        "polynomial order must be nonnegative, got {k}"
                    )));
                }
            }
            WeightSpec::TildeExp { gamma, beta } => {
                if !(gamma > 0.0) {
                    return Err(Error::Config(format!(
                        "gamma must be positive, got {gamma}"
                    )));
                }
                let expected = tilde_weight_beta(chi, gamma);
                if (beta - expected).abs() > 1e-12 * expected {
                    return Err(Error::Config(format!(
                        "beta must equal gamma chi/(1+chi) = {expected}, got {beta}"
                    )));
                }
                let delta = (gamma + beta) * v0;
                if delta >= 1.0 {
                    return Err(Error::Config(format!(
                        "sandwich constant {delta} must be below 1"
                    )));
                }
                for cell in 0..grid.n_cells() {
                    let x = grid.position(cell);
                    let x = &x[..grid.dim()];
                    let base = (gamma * japanese_bracket(x)).exp();
                    for j in 0..grid.n_v() {
                        let m = self.eval(x, grid.velocity(j));
                        if !(m >= (1.0 - delta) * base * (1.0 - 1e-14)
                            && m <= (1.0 + delta) * base * (1.0 + 1e-14))
                        {
                            return Err(Error::Config(format!(
                                "corrected weight leaves its sandwich at cell {cell}, velocity {j}"
                            )));
                        }
                    }
                }
            }
            WeightSpec::TildePoly { q, gamma, beta } => {
                if !(q >= 0.0 && gamma > 0.0 && beta >= 0.0) {
                    return Err(Error::Config(
                        "polynomial corrected weight needs q >= 0, gamma > 0, beta >= 0".into(),
                    ));
                }
            }
            WeightSpec::Mu | WeightSpec::Nu => {}
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        match *self {
            WeightSpec::Exponential { gamma } => (gamma * japanese_bracket(x)).exp(),
            WeightSpec::Polynomial { k } => japanese_bracket(x).powf(k),
            WeightSpec::TildeExp { gamma, beta } => {
                let b = japanese_bracket(x);
                let s = dot(x, v);
                (1.0 + (gamma * s - beta * s.abs()) / b) * (gamma * b).exp()
            }
            WeightSpec::TildePoly { q, gamma, beta } => {
                let b2 = 1.0 + gamma * gamma * dot(x, x);
                let s = dot(x, v);
                b2.powf(0.5 * q) + q * (gamma * s - beta * s.abs()) * b2.powf(0.5 * q - 1.0)
            }
            WeightSpec::Mu => {
                let r = norm(x);
                let cut = cutoff_profile(2.0 * r);
                if cut == 0.0 {
                    return 0.0;
                }
                let speed = norm(v);
                if r == 0.0 || speed == 0.0 {
                    return cut;
                }
                (1.0 - dot(x, v) / (r.sqrt() * speed)) * cut
            }
            WeightSpec::Nu => {
                let r = norm(x);
                let cut = cutoff_profile(2.0 * r);
                if cut == 0.0 || r == 0.0 {
                    return 0.0;
                }
                norm(v) / r.sqrt() * cut
            }
        }
    }

    /// Whether the weight depends on position only.
    pub fn is_spatial(&self) -> bool {
        matches!(
            self,
            WeightSpec::Exponential { .. } | WeightSpec::Polynomial { .. }
        )
    }
}
