//! Phase-space density on a [`PhaseGrid`].

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::PhaseGrid;

#[derive(Debug, Clone)]
pub struct DistributionField {
    grid: Arc<PhaseGrid>,
    values: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(grid: Arc<PhaseGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(grid: Arc<PhaseGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Independent standard normal values at every node.
    pub fn noise(grid: Arc<PhaseGrid>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self { grid, values }
    }

    /// Samples `f(x, v)` at every node; `x` and `v` are sliced to the grid dimension.
    pub fn from_fn(grid: Arc<PhaseGrid>, f: impl Fn(&[f64], &[f64]) -> f64) -> Self {
        let dim = grid.dim();
        let n_v = grid.n_v();
        let mut values = Vec::with_capacity(grid.len());
        for cell in 0..grid.n_cells() {
            let x = grid.position(cell);
            for j in 0..n_v {
                values.push(f(&x[..dim], grid.velocity(j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, cell: usize, j: usize) -> f64 {
        self.values[cell * self.grid.n_v() + j]
    }

    /// Total mass `sum_ij f_ij w_j dx^d`.
    pub fn mass(&self) -> f64 {
        self.weighted_sum(|_, _, f| f)
    }

    /// `sum_ij g(cell, j, f_ij) w_j dx^d`, accumulated sequentially.
    pub fn weighted_sum(&self, g: impl Fn(usize, usize, f64) -> f64) -> f64 {
        let n_v = self.grid.n_v();
        let w = self.grid.v_weights();
        let mut acc = 0.0;
        for (cell, row) in self.values.chunks_exact(n_v).enumerate() {
            let mut cell_acc = 0.0;
            for (j, &f) in row.iter().enumerate() {
                cell_acc += w[j] * g(cell, j, f);
            }
            acc += cell_acc;
        }
        acc * self.grid.cell_volume()
    }

    /// Velocity average `rho_i = sum_j w_j f_ij`.
    pub fn density(&self) -> Vec<f64> {
        let w = self.grid.v_weights();
        self.values
            .chunks_exact(self.grid.n_v())
            .map(|row| row.iter().zip(w).map(|(f, w)| f * w).sum())
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &DistributionField) -> Result<()> {
        self.check_same_grid(other)?;
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(s, o)| *s += a * o);
        Ok(())
    }

    /// `sum |f - g| w dx^d`.
    pub fn l1_distance(&self, other: &DistributionField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.weighted_sum(|cell, j, f| (f - other.get(cell, j)).abs()))
    }

    pub fn check_same_grid(&self, other: &DistributionField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_shape(&other.grid) {
            Ok(())
        } else {
            Err(Error::Mismatch("fields live on different grids".into()))
        }
    }
}
