use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::{japanese_bracket, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub q: f64,
    /// `<< f <x>^q >>`.
    pub m_q: f64,
    /// `<< f m_q >>` with the velocity-corrected polynomial weight.
    pub tilde_w_q: f64,
}

pub fn moments(f: &DistributionField, q: f64, gamma: f64, beta: f64) -> Result<Moments> {
    if !(q >= 0.0) {
        return Err(Error::Domain(format!(
            "moment order must be nonnegative, got {q}"
        )));
    }
    let grid = f.grid();
    let dim = grid.dim();
    let tilde = WeightSpec::TildePoly { q, gamma, beta };
    let m_q = f.weighted_sum(|cell, _, v| {
        let pos = grid.position(cell);
        v * japanese_bracket(&pos[..dim]).powf(q)
    });
    let tilde_w_q = f.weighted_sum(|cell, j, v| {
        let pos = grid.position(cell);
        v * tilde.eval(&pos[..dim], grid.velocity(j))
    });
    Ok(Moments { q, m_q, tilde_w_q })
}
