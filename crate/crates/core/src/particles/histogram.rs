use serde::Serialize;
use std::sync::Arc;

use super::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::PhaseGrid;

/// Normalized spatial histogram; `sum(density) * dx^d + overflow = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct SpatialHistogram {
    pub density: Vec<f64>,
    /// Fraction of particles outside the box.
    pub overflow: f64,
}

impl SpatialHistogram {
    pub fn mass(&self, grid: &PhaseGrid) -> f64 {
        self.density.iter().sum::<f64>() * grid.cell_volume() + self.overflow
    }

    /// `sum |rho_hist - rho| dx^d + overflow`.
    pub fn l1_distance(&self, grid: &PhaseGrid, rho: &[f64]) -> Result<f64> {
        if rho.len() != self.density.len() {
            return Err(Error::Mismatch(
                "density length differs from histogram".into(),
            ));
        }
        Ok(self
            .density
            .iter()
            .zip(rho)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * grid.cell_volume()
            + self.overflow)
    }
}

fn check_dim(e: &ParticleEnsemble, grid: &PhaseGrid) -> Result<()> {
    if e.dim() != grid.dim() {
        return Err(Error::Mismatch(format!(
            "ensemble dim {} vs grid dim {}",
            e.dim(),
            grid.dim()
        )));
    }
    if e.is_empty() {
        return Err(Error::Domain("empty ensemble".into()));
    }
    Ok(())
}

pub fn spatial_histogram(e: &ParticleEnsemble, grid: &PhaseGrid) -> Result<SpatialHistogram> {
    check_dim(e, grid)?;
    let mut counts = vec![0u64; grid.n_cells()];
    let mut outside = 0u64;
    for i in 0..e.len() {
        match grid.locate(e.position(i)) {
            Some(c) => counts[c] += 1,
            None => outside += 1,
        }
    }
    let n = e.len() as f64;
    let scale = 1.0 / (n * grid.cell_volume());
    Ok(SpatialHistogram {
        density: counts.iter().map(|&c| c as f64 * scale).collect(),
        overflow: outside as f64 / n,
    })
}

/// Phase-space histogram as a field with `mass = 1 - overflow`.
pub fn phase_histogram(
    e: &ParticleEnsemble,
    grid: &Arc<PhaseGrid>,
) -> Result<(DistributionField, f64)> {
    check_dim(e, grid)?;
    let n_v = grid.n_v();
    let mut counts = vec![0u64; grid.len()];
    let mut outside = 0u64;
    for i in 0..e.len() {
        match (
            grid.locate(e.position(i)),
            grid.velocity_cell(e.velocity(i)),
        ) {
            (Some(c), Some(j)) => counts[c * n_v + j] += 1,
            _ => outside += 1,
        }
    }
    let n = e.len() as f64;
    let w = grid.v_weights();
    let values = counts
        .iter()
        .enumerate()
        .map(|(idx, &c)| c as f64 / (n * grid.cell_volume() * w[idx % n_v]))
        .collect();
    Ok((
        DistributionField::from_values(grid.clone(), values)?,
        outside as f64 / n,
    ))
}
