use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::{dot, norm};

/// Radial cutoff profile: 1 on `[0,1]`, `cos^2(pi (r-1)/2)` on `(1,2)`, 0 beyond.
pub fn cutoff_profile(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let c = (0.5 * PI * (r - 1.0)).cos();
        c * c
    }
}

/// `phi_lambda(z) = phi(z / lambda)` for a position or velocity vector `z`.
pub fn cutoff_phi(lambda: f64, z: &[f64]) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "cutoff scale must be positive, got {lambda}"
        )));
    }
    Ok(cutoff_profile(norm(z) / lambda))
}

pub fn sharp_sign(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Odd C^1 cubic spline for the sign function, saturating at `|s| >= delta`.
pub fn regularized_sign(delta: f64, s: f64) -> f64 {
    let u = s / delta;
    if u >= 1.0 {
        1.0
    } else if u <= -1.0 {
        -1.0
    } else {
        0.5 * u * (3.0 - u * u)
    }
}

/// Turning kernel variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelVariant {
    Sharp,
    Regularized {
        delta3: f64,
    },
    /// Kernel localized in position and velocity with regularized sign.
    Surgical {
        r: f64,
        delta1: f64,
        delta2: f64,
        delta3: f64,
    },
    /// Sharp kernel multiplied by `1 - phi_R(x)`.
    TruncatedGainComplement {
        r: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub chi: f64,
    pub variant: KernelVariant,
    /// Radius of the velocity ball.
    pub v0: f64,
}

impl KernelSpec {
    pub fn new(chi: f64, variant: KernelVariant, v0: f64) -> Result<Self> {
        let spec = Self { chi, variant, v0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sharp(chi: f64, v0: f64) -> Result<Self> {
        Self::new(chi, KernelVariant::Sharp, v0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chi > 0.0 && self.chi < 1.0) {
            return Err(Error::Config(format!(
                "chi must lie in (0,1), got {}",
                self.chi
            )));
        }
        if !(self.v0 > 0.0) {
            return Err(Error::Config(format!(
                "velocity radius must be positive, got {}",
                self.v0
            )));
        }
        match self.variant {
            KernelVariant::Sharp => {}
            KernelVariant::Regularized { delta3 } => {
                if !(delta3 > 0.0 && delta3 < 0.5) {
                    return Err(Error::Config(format!(
                        "delta3 must lie in (0, 1/2), got {delta3}"
                    )));
                }
            }
            KernelVariant::Surgical {
                r,
                delta1,
                delta2,
                delta3,
            } => {
                if !(r > 1.0) {
                    return Err(Error::Config(format!("R must exceed 1, got {r}")));
                }
                if !(delta1 > 0.0 && delta1 < 1.0 && 4.0 * delta1 <= self.v0) {
                    return Err(Error::Config(format!(
                        "delta1 must lie in (0, v0/4] = (0, {}], got {delta1}",
                        self.v0 / 4.0
                    )));
                }
                if !(delta2 > 0.0 && delta2 < 0.25) {
                    return Err(Error::Config(format!(
                        "delta2 must lie in (0, 1/4), got {delta2}"
                    )));
                }
                if !(delta3 > 0.0 && delta3 < 0.5) {
                    return Err(Error::Config(format!(
                        "delta3 must lie in (0, 1/2), got {delta3}"
                    )));
                }
            }
            KernelVariant::TruncatedGainComplement { r } => {
                if !(r > 0.0) {
                    return Err(Error::Config(format!("R must be positive, got {r}")));
                }
            }
        }
        Ok(())
    }

    /// Truncation radius, if the variant has one.
    pub fn radius(&self) -> Option<f64> {
        match self.variant {
            KernelVariant::Surgical { r, .. } | KernelVariant::TruncatedGainComplement { r } => {
                Some(r)
            }
            _ => None,
        }
    }

    /// Kernel value at `(x, v)`; fails if `|v| > v0`.
    pub fn eval(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let speed = norm(v);
        if speed > self.v0 * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "|v| = {speed} exceeds v0 = {}",
                self.v0
            )));
        }
        Ok(self.eval_unchecked(x, v))
    }

    pub fn eval_unchecked(&self, x: &[f64], v: &[f64]) -> f64 {
        let s = dot(x, v);
        match self.variant {
            KernelVariant::Sharp => 1.0 + self.chi * sharp_sign(s),
            KernelVariant::Regularized { delta3 } => 1.0 + self.chi * regularized_sign(delta3, s),
            KernelVariant::Surgical {
                r,
                delta1,
                delta2,
                delta3,
            } => {
                let rx = norm(x);
                let annulus = cutoff_profile(rx / r) - cutoff_profile(rx / delta2);
                if annulus == 0.0 {
                    return 0.0;
                }
                let speed = norm(v);
                let shell = 1.0
                    - cutoff_profile((self.v0 - speed).abs() / delta1)
                    - cutoff_profile(speed / delta1);
                annulus * shell * (1.0 + self.chi * regularized_sign(delta3, s))
            }
            KernelVariant::TruncatedGainComplement { r } => {
                (1.0 - cutoff_profile(norm(x) / r)) * (1.0 + self.chi * sharp_sign(s))
            }
        }
    }

    /// The sharp kernel with the same `chi`.
    pub fn sharp_part(&self) -> KernelSpec {
        KernelSpec {
            variant: KernelVariant::Sharp,
            ..*self
        }
    }
}
