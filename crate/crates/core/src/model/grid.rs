use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::constants::v0;
use crate::error::{Error, Result};

/// Velocity space discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySet {
    /// Unit-volume ball: midpoint rule (dim 1) or polar rings (dim 2).
    #[default]
    Ball,
    /// The two velocities `-1` and `+1` with weight one half each (dim 1 only).
    TwoVelocity,
}

/// Serializable description of a [`PhaseGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub half_width: f64,
    pub n_x: usize,
    /// Velocity cells (dim 1) or radial rings (dim 2).
    pub n_v: usize,
    /// Angular sectors per ring (dim 2 only).
    #[serde(default)]
    pub n_theta: usize,
    #[serde(default)]
    pub velocities: VelocitySet,
}

impl GridSpec {
    pub fn line(half_width: f64, n_x: usize, n_v: usize) -> Self {
        Self {
            dim: 1,
            half_width,
            n_x,
            n_v,
            n_theta: 0,
            velocities: VelocitySet::Ball,
        }
    }
}

/// Truncated position box times a velocity quadrature.
///
/// Cells are indexed `i + n_x * k` in dim 2 (`i` along the first axis).
/// Field values are stored cell-major: `values[cell * n_v + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    spec: GridSpec,
    dx: f64,
    axis: Vec<f64>,
    v_nodes: Vec<[f64; 2]>,
    v_weights: Vec<f64>,
    speed: f64,
}

impl PhaseGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        if !(spec.half_width > 0.0 && spec.half_width.is_finite()) {
            return Err(Error::Config(format!(
                "half_width must be positive, got {}",
                spec.half_width
            )));
        }
        if spec.n_x < 2 {
            return Err(Error::Config("n_x must be at least 2".into()));
        }
        if spec.n_v == 0 {
            return Err(Error::Config("n_v must be positive".into()));
        }
        let dx = 2.0 * spec.half_width / spec.n_x as f64;
        let axis = (0..spec.n_x)
            .map(|i| -spec.half_width + (i as f64 + 0.5) * dx)
            .collect();
        let (v_nodes, v_weights, speed) = match (spec.dim, spec.velocities) {
            (1, VelocitySet::Ball) => {
                let speed = v0(1);
                let h = 2.0 * speed / spec.n_v as f64;
                let nodes = (0..spec.n_v)
                    .map(|j| [-speed + (j as f64 + 0.5) * h, 0.0])
                    .collect();
                (nodes, vec![1.0 / spec.n_v as f64; spec.n_v], speed)
            }
            (1, VelocitySet::TwoVelocity) => {
                if spec.n_v != 2 {
                    return Err(Error::Config(format!(
                        "two-velocity model needs n_v = 2, got {}",
                        spec.n_v
                    )));
                }
                (vec![[-1.0, 0.0], [1.0, 0.0]], vec![0.5, 0.5], 1.0)
            }
            (2, VelocitySet::Ball) => {
                if spec.n_theta == 0 || !spec.n_theta.is_multiple_of(4) {
                    return Err(Error::Config(format!(
                        "n_theta must be a positive multiple of 4, got {}",
                        spec.n_theta
                    )));
                }
                let speed = v0(2);
                let (nr, nt) = (spec.n_v, spec.n_theta);
                let mut nodes = Vec::with_capacity(nr * nt);
                let mut weights = Vec::with_capacity(nr * nt);
                for k in 0..nr {
                    let (r0, r1) = (
                        speed * k as f64 / nr as f64,
                        speed * (k + 1) as f64 / nr as f64,
                    );
                    let r = 0.5 * (r0 + r1);
                    // ring area over total disc area
                    let w = (r1 * r1 - r0 * r0) / (speed * speed) / nt as f64;
                    for m in 0..nt {
                        let th = (m as f64 + 0.5) * 2.0 * PI / nt as f64;
                        nodes.push([r * th.cos(), r * th.sin()]);
                        weights.push(w);
                    }
                }
                (nodes, weights, speed)
            }
            (2, VelocitySet::TwoVelocity) => {
                return Err(Error::Config(
                    "two-velocity model is one-dimensional".into(),
                ));
            }
            (d, _) => {
                return Err(Error::Config(format!(
                    "deterministic grids support dim 1 or 2, got {d}"
                )))
            }
        };
        Ok(Self {
            spec,
            dx,
            axis,
            v_nodes,
            v_weights,
            speed,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }

    pub fn n_x(&self) -> usize {
        self.spec.n_x
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Cell volume `dx^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.spec.dim as i32)
    }

    /// Cell centres along one axis.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn n_cells(&self) -> usize {
        self.spec.n_x.pow(self.spec.dim as u32)
    }

    pub fn n_v(&self) -> usize {
        self.v_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n_cells() * self.n_v()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest speed of the velocity set.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn velocity_set(&self) -> VelocitySet {
        self.spec.velocities
    }

    pub fn v_weights(&self) -> &[f64] {
        &self.v_weights
    }

    /// Velocity node `j` as a slice of length `dim`.
    pub fn velocity(&self, j: usize) -> &[f64] {
        &self.v_nodes[j][..self.spec.dim]
    }

    /// Centre of a cell, padded to two components.
    pub fn position(&self, cell: usize) -> [f64; 2] {
        let n = self.spec.n_x;
        match self.spec.dim {
            1 => [self.axis[cell], 0.0],
            _ => [self.axis[cell % n], self.axis[cell / n]],
        }
    }

    /// Per-axis indices of a cell.
    pub fn cell_indices(&self, cell: usize) -> [usize; 2] {
        let n = self.spec.n_x;
        match self.spec.dim {
            1 => [cell, 0],
            _ => [cell % n, cell / n],
        }
    }

    pub fn cell_of(&self, idx: [usize; 2]) -> usize {
        match self.spec.dim {
            1 => idx[0],
            _ => idx[0] + self.spec.n_x * idx[1],
        }
    }

    /// Axis index of the cell containing coordinate `z`, if inside the box.
    pub fn axis_cell(&self, z: f64) -> Option<usize> {
        let s = (z + self.spec.half_width) / self.dx;
        if s >= 0.0 && s < self.spec.n_x as f64 {
            Some((s.floor() as usize).min(self.spec.n_x - 1))
        } else {
            None
        }
    }

    /// Cell containing the position, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let i = self.axis_cell(x[0])?;
        if self.spec.dim == 1 {
            return Some(i);
        }
        let k = self.axis_cell(x[1])?;
        Some(self.cell_of([i, k]))
    }

    /// Velocity cell containing `v` for ball grids, or the matching node for the two-velocity set.
    pub fn velocity_cell(&self, v: &[f64]) -> Option<usize> {
        match (self.spec.dim, self.spec.velocities) {
            (1, VelocitySet::TwoVelocity) => Some(if v[0] < 0.0 { 0 } else { 1 }),
            (1, VelocitySet::Ball) => {
                let s = (v[0] + self.speed) / (2.0 * self.speed) * self.spec.n_v as f64;
                (s >= 0.0 && s <= self.spec.n_v as f64)
                    .then(|| (s.floor() as usize).min(self.spec.n_v - 1))
            }
            _ => {
                let r = crate::norm(v);
                let s = r / self.speed * self.spec.n_v as f64;
                if s > self.spec.n_v as f64 {
                    return None;
                }
                let k = (s.floor() as usize).min(self.spec.n_v - 1);
                let th = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
                let m = ((th / (2.0 * PI) * self.spec.n_theta as f64).floor() as usize)
                    .min(self.spec.n_theta - 1);
                Some(k * self.spec.n_theta + m)
            }
        }
    }

    /// Index of the velocity obtained by a quarter turn (dim 2 ball grids).
    pub fn rotated_velocity(&self, j: usize) -> usize {
        let nt = self.spec.n_theta;
        let (k, m) = (j / nt, j % nt);
        k * nt + (m + nt / 4) % nt
    }

    /// Index of `-v`.
    pub fn reflected_velocity(&self, j: usize) -> usize {
        match self.spec.dim {
            1 => self.n_v() - 1 - j,
            _ => {
                let nt = self.spec.n_theta;
                let (k, m) = (j / nt, j % nt);
                k * nt + (m + nt / 2) % nt
            }
        }
    }

    /// Velocity cell edges for the one-dimensional ball grid.
    pub fn velocity_cell_edges(&self, j: usize) -> Option<(f64, f64)> {
        if self.spec.dim != 1 || self.spec.velocities != VelocitySet::Ball {
            return None;
        }
        let h = 2.0 * self.speed / self.spec.n_v as f64;
        Some((-self.speed + j as f64 * h, -self.speed + (j + 1) as f64 * h))
    }

    pub fn same_shape(&self, other: &PhaseGrid) -> bool {
        self.spec == other.spec
    }
}
