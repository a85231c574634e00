use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cutoff_profile, KernelSpec, KernelVariant, PhaseGrid};
use crate::norm;

/// Which operator of the splitting a [`Generator`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorTag {
    /// Full run-and-tumble generator.
    L,
    /// Transport with loss only.
    B0,
    /// `B0` plus the gain outside the ball of radius `R`.
    B1,
    /// Full generator minus the surgical gain.
    B,
    /// Gain inside the ball of radius `R`.
    A1,
    /// Gain with the surgical kernel.
    #[serde(rename = "A_surgical")]
    ASurgical,
}

impl OperatorTag {
    pub fn has_transport(self) -> bool {
        !matches!(self, OperatorTag::A1 | OperatorTag::ASurgical)
    }
}

/// Spatial reconstruction of the transport term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Upwind,
    /// Piecewise-linear reconstruction with minmod slopes.
    Muscl,
}

/// Sparse action of one operator on fields of a grid.
///
/// The collision part is rank one per cell: the gain at `(x_c, v_j)` is
/// `sum_j' gain[c, j'] f[c, j']`, independent of `j`.
#[derive(Debug, Clone)]
pub struct Generator {
    tag: OperatorTag,
    scheme: Scheme,
    grid: Arc<PhaseGrid>,
    kernel: KernelSpec,
    radius: Option<f64>,
    loss: Vec<f64>,
    gain: Vec<f64>,
    has_gain: bool,
    gain_nonnegative: bool,
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

impl Generator {
    /// Assembles `tag` on `grid`.
    ///
    /// The turning kernel of the full generator is `kernel` itself when it is sharp or
    /// regularized, and its sharp part otherwise. `B1`/`A1` take their radius from a
    /// truncated or surgical kernel; `B`/`A_surgical` need a surgical kernel.
    pub fn assemble(
        tag: OperatorTag,
        grid: Arc<PhaseGrid>,
        kernel: KernelSpec,
        scheme: Scheme,
    ) -> Result<Self> {
        kernel.validate()?;
        if (kernel.v0 - grid.speed()).abs() > 1e-12 * grid.speed() {
            return Err(Error::Config(format!(
                "kernel velocity radius {} does not match grid speed {}",
                kernel.v0,
                grid.speed()
            )));
        }
        let base = match kernel.variant {
            KernelVariant::Sharp | KernelVariant::Regularized { .. } => kernel,
            _ => kernel.sharp_part(),
        };
        let radius = match tag {
            OperatorTag::B1 | OperatorTag::A1 => Some(kernel.radius().ok_or_else(|| {
                Error::Config(format!(
                    "operator {tag:?} needs a truncation radius (truncated or surgical kernel)"
                ))
            })?),
            OperatorTag::B | OperatorTag::ASurgical => {
                let KernelVariant::Surgical { r, .. } = kernel.variant else {
                    return Err(Error::Config(format!(
                        "operator {tag:?} needs a surgical kernel"
                    )));
                };
                if 2.0 * r > grid.half_width() {
                    return Err(Error::Config(format!(
                        "surgical support radius 2R = {} exceeds the box half width {}",
                        2.0 * r,
                        grid.half_width()
                    )));
                }
                Some(r)
            }
            _ => None,
        };
        let dim = grid.dim();
        let n_v = grid.n_v();
        let w = grid.v_weights();
        let mut loss = vec![0.0; grid.len()];
        let mut gain = vec![0.0; grid.len()];
        for cell in 0..grid.n_cells() {
            let pos = grid.position(cell);
            let x = &pos[..dim];
            let cut = radius.map(|r| cutoff_profile(norm(x) / r)).unwrap_or(0.0);
            for j in 0..n_v {
                let v = grid.velocity(j);
                let k = base.eval_unchecked(x, v);
                let idx = cell * n_v + j;
                if tag.has_transport() {
                    loss[idx] = k;
                }
                gain[idx] = w[j]
                    * match tag {
                        OperatorTag::L => k,
                        OperatorTag::B0 => 0.0,
                        OperatorTag::B1 => (1.0 - cut) * k,
                        OperatorTag::A1 => cut * k,
                        OperatorTag::ASurgical => kernel.eval_unchecked(x, v),
                        OperatorTag::B => k - kernel.eval_unchecked(x, v),
                    };
            }
        }
        let has_gain = gain.iter().any(|&g| g != 0.0);
        let gain_nonnegative = gain.iter().all(|&g| g >= 0.0);
        Ok(Self {
            tag,
            scheme,
            grid,
            kernel,
            radius,
            loss,
            gain,
            has_gain,
            gain_nonnegative,
        })
    }

    pub fn tag(&self) -> OperatorTag {
        self.tag
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn gain_is_nonnegative(&self) -> bool {
        self.gain_nonnegative
    }

    pub fn is_linear(&self) -> bool {
        self.scheme == Scheme::Upwind || !self.tag.has_transport()
    }

    /// Loss rate at node `(cell, j)`.
    pub fn loss(&self, cell: usize, j: usize) -> f64 {
        self.loss[cell * self.grid.n_v() + j]
    }

    /// Gain coefficient of column `(cell, j)`.
    pub fn gain(&self, cell: usize, j: usize) -> f64 {
        self.gain[cell * self.grid.n_v() + j]
    }

    /// Largest forward-Euler step keeping every update a nonnegative combination.
    pub fn max_positive_dt(&self) -> f64 {
        let factor = match self.scheme {
            Scheme::Upwind => 1.0,
            Scheme::Muscl => 2.0,
        };
        let mut rate: f64 = 0.0;
        if self.tag.has_transport() {
            let max_speed_sum = (0..self.grid.n_v())
                .map(|j| self.grid.velocity(j).iter().map(|c| c.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            rate = factor * max_speed_sum / self.grid.dx();
        }
        let max_loss = self.loss.iter().copied().fold(0.0, f64::max);
        rate += max_loss;
        if rate == 0.0 {
            f64::INFINITY
        } else {
            1.0 / rate
        }
    }

    /// Weighted column sums `sum_j w_j C[(c,j),(c,j')]` of the collision block.
    pub fn collision_column_sums(&self) -> Vec<f64> {
        let w_total: f64 = self.grid.v_weights().iter().sum();
        let w = self.grid.v_weights();
        let n_v = self.grid.n_v();
        (0..self.grid.len())
            .map(|idx| w_total * self.gain[idx] - w[idx % n_v] * self.loss[idx])
            .collect()
    }

    /// Row sums of the gain block, one per cell.
    pub fn gain_row_sums(&self) -> Vec<f64> {
        self.gain
            .chunks_exact(self.grid.n_v())
            .map(|row| row.iter().sum())
            .collect()
    }

    #[inline]
    fn neighbors(&self, cell: usize, axis: usize) -> (Option<usize>, Option<usize>) {
        let n = self.grid.n_x();
        let (i, stride) = match axis {
            0 => (cell % n, 1),
            _ => (cell / n, n),
        };
        let prev = (i > 0).then(|| cell - stride);
        let next = (i + 1 < n).then(|| cell + stride);
        (prev, next)
    }

    /// Face values `(left, right)` of cell `cell` for velocity `j` along `axis`.
    #[inline]
    fn faces(&self, f: &[f64], cell: usize, j: usize, axis: usize) -> (f64, f64) {
        let n_v = self.grid.n_v();
        let center = f[cell * n_v + j];
        match self.scheme {
            Scheme::Upwind => (center, center),
            Scheme::Muscl => {
                let (prev, next) = self.neighbors(cell, axis);
                let fp = prev.map(|p| f[p * n_v + j]).unwrap_or(0.0);
                let fn_ = next.map(|q| f[q * n_v + j]).unwrap_or(0.0);
                let half = 0.5 * minmod(center - fp, fn_ - center);
                (center - half, center + half)
            }
        }
    }

    fn transport_rate(&self, f: &[f64], cell: usize, j: usize) -> f64 {
        let v = self.grid.velocity(j);
        let mut acc = 0.0;
        for (axis, &va) in v.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            let (prev, next) = self.neighbors(cell, axis);
            let (flux_left, flux_right) = if va > 0.0 {
                let inflow = prev
                    .map(|p| va * self.faces(f, p, j, axis).1)
                    .unwrap_or(0.0);
                (inflow, va * self.faces(f, cell, j, axis).1)
            } else {
                let inflow = next
                    .map(|q| va * self.faces(f, q, j, axis).0)
                    .unwrap_or(0.0);
                (va * self.faces(f, cell, j, axis).0, inflow)
            };
            acc -= (flux_right - flux_left) / self.grid.dx();
        }
        acc
    }

    /// Rate of mass leaving the box through its boundary faces.
    pub fn outflow_rate(&self, f: &[f64]) -> f64 {
        if !self.tag.has_transport() {
            return 0.0;
        }
        let n = self.grid.n_x();
        let n_v = self.grid.n_v();
        let w = self.grid.v_weights();
        let dim = self.grid.dim();
        let face_area = self.grid.dx().powi(dim as i32 - 1);
        let mut total = 0.0;
        for axis in 0..dim {
            let lines = if dim == 1 { 1 } else { n };
            for line in 0..lines {
                let (first, last) = match (dim, axis) {
                    (1, _) => (0, n - 1),
                    (_, 0) => (line * n, line * n + n - 1),
                    _ => (line, line + n * (n - 1)),
                };
                for j in 0..n_v {
                    let va = self.grid.velocity(j)[axis];
                    if va > 0.0 {
                        total += w[j] * va * self.faces(f, last, j, axis).1;
                    } else if va < 0.0 {
                        total -= w[j] * va * self.faces(f, first, j, axis).0;
                    }
                }
            }
        }
        total * face_area
    }

    /// `out = G f`; returns the boundary outflow rate of `f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) -> f64 {
        assert_eq!(f.len(), self.grid.len());
        assert_eq!(out.len(), self.grid.len());
        let n_v = self.grid.n_v();
        let transport = self.tag.has_transport();
        out.par_chunks_mut(n_v).enumerate().for_each(|(cell, row)| {
            let base = cell * n_v;
            let gain_total = if self.has_gain {
                let mut g = 0.0;
                for j in 0..n_v {
                    g += self.gain[base + j] * f[base + j];
                }
                g
            } else {
                0.0
            };
            for (j, slot) in row.iter_mut().enumerate() {
                let mut r = gain_total - self.loss[base + j] * f[base + j];
                if transport {
                    r += self.transport_rate(f, cell, j);
                }
                *slot = r;
            }
        });
        self.outflow_rate(f)
    }

    /// Dense matrix of a linear generator, row-major; intended for small grids.
    pub fn to_dense(&self) -> Result<Vec<Vec<f64>>> {
        if !self.is_linear() {
            return Err(Error::Config(
                "dense assembly requires a linear scheme".into(),
            ));
        }
        let n = self.grid.len();
        let mut cols = Vec::with_capacity(n);
        let mut e = vec![0.0; n];
        let mut out = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            self.apply(&e, &mut out);
            cols.push(out.clone());
            e[k] = 0.0;
        }
        Ok((0..n)
            .map(|r| (0..n).map(|c| cols[c][r]).collect())
            .collect())
    }
}
