use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::WeightSpec;

/// Total mass `sum f_ij w_j dx^d`.
pub fn mass(f: &DistributionField) -> f64 {
    f.mass()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    L2,
    Linf,
    /// `L1(m) + L2(m)`.
    X,
    /// `L1` with weight `<x>^k`.
    L1Poly(f64),
    TripleBar,
    N,
    HhalfSeminorm,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub kind: NormKind,
    pub value: f64,
    pub weight: Option<WeightSpec>,
}

fn weighted_values(f: &DistributionField, w: &WeightSpec) -> Vec<f64> {
    let grid = f.grid();
    let dim = grid.dim();
    let n_v = grid.n_v();
    f.values()
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let pos = grid.position(idx / n_v);
            v * w.eval(&pos[..dim], grid.velocity(idx % n_v))
        })
        .collect()
}

pub(crate) fn l1(f: &DistributionField, w: &WeightSpec) -> f64 {
    let mf = weighted_values(f, w);
    f.weighted_sum(|cell, j, _| mf[cell * f.grid().n_v() + j].abs())
}

pub(crate) fn l2(f: &DistributionField, w: &WeightSpec) -> f64 {
    let mf = weighted_values(f, w);
    f.weighted_sum(|cell, j, _| mf[cell * f.grid().n_v() + j].powi(2))
        .sqrt()
}

/// Discrete weighted Lebesgue norms `|| m f ||_{L^p}`.
pub fn weighted_norm(f: &DistributionField, kind: NormKind, w: &WeightSpec) -> Result<NormReport> {
    let value = match kind {
        NormKind::L1 => l1(f, w),
        NormKind::L2 => l2(f, w),
        NormKind::Linf => weighted_values(f, w)
            .iter()
            .fold(0.0, |a: f64, v| a.max(v.abs())),
        NormKind::X => l1(f, w) + l2(f, w),
        NormKind::L1Poly(k) => l1(f, &WeightSpec::Polynomial { k }),
        other => {
            return Err(Error::Domain(format!(
                "{other:?} is not a pointwise weighted norm"
            )));
        }
    };
    let weight = match kind {
        NormKind::L1Poly(k) => Some(WeightSpec::Polynomial { k }),
        _ => Some(*w),
    };
    Ok(NormReport {
        kind,
        value,
        weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridSpec, PhaseGrid};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid() -> Arc<PhaseGrid> {
        Arc::new(PhaseGrid::new(GridSpec::line(5.0, 40, 6)).unwrap())
    }

    #[test]
    fn unit_weight_l1_is_mass() {
        let g = grid();
        let f = DistributionField::from_fn(g, |_, _| 1.0);
        let r = weighted_norm(&f, NormKind::L1, &WeightSpec::Polynomial { k: 0.0 }).unwrap();
        assert!((r.value - f.mass()).abs() < 1e-13);
    }

    #[test]
    fn one_cell_field() {
        let g = grid();
        let mut f = DistributionField::zeros(g.clone());
        for j in 0..6 {
            f.values_mut()[7 * 6 + j] = 2.0;
        }
        let w = WeightSpec::Exponential { gamma: 0.3 };
        let cellmass = 2.0 * g.dx();
        let x = g.axis()[7];
        let expected = cellmass * (0.3 * (1.0 + x * x).sqrt()).exp();
        assert!((weighted_norm(&f, NormKind::L1, &w).unwrap().value - expected).abs() < 1e-13);
        assert!(weighted_norm(&f, NormKind::N, &w).is_err());
    }

    proptest! {
        #[test]
        fn norm_axioms(seed in any::<u64>(), a in -5.0f64..5.0, g1 in 0.0f64..0.4, g2 in 0.0f64..0.4) {
            let g = grid();
            let f = DistributionField::noise(g.clone(), seed);
            let h = DistributionField::noise(g.clone(), seed.wrapping_add(1));
            let w = WeightSpec::Exponential { gamma: g1 };
            for kind in [NormKind::L1, NormKind::L2, NormKind::Linf, NormKind::X] {
                let nf = weighted_norm(&f, kind, &w).unwrap().value;
                let nh = weighted_norm(&h, kind, &w).unwrap().value;
                let mut scaled = f.clone();
                scaled.scale(a);
                prop_assert!((weighted_norm(&scaled, kind, &w).unwrap().value - a.abs() * nf).abs() <= 1e-12 * (1.0 + nf * a.abs()));
                let mut sum = f.clone();
                sum.axpy(1.0, &h).unwrap();
                prop_assert!(weighted_norm(&sum, kind, &w).unwrap().value <= nf + nh + 1e-12);
                prop_assert!(nf >= 0.0);
            }
            let pos = DistributionField::from_values(g.clone(), f.values().iter().map(|v| v.abs()).collect()).unwrap();
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let n_lo = weighted_norm(&pos, NormKind::L1, &WeightSpec::Exponential { gamma: lo }).unwrap().value;
            let n_hi = weighted_norm(&pos, NormKind::L1, &WeightSpec::Exponential { gamma: hi }).unwrap().value;
            prop_assert!(n_lo <= n_hi * (1.0 + 1e-14));
        }

        #[test]
        fn mass_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = grid();
            let f = DistributionField::from_fn(g.clone(), |x, v| (x[0] + v[0]).sin());
            let h = DistributionField::from_fn(g.clone(), |x, _| (-x[0] * x[0]).exp());
            let mut c = f.clone();
            c.scale(a);
            c.axpy(b, &h).unwrap();
            prop_assert!((mass(&c) - a * mass(&f) - b * mass(&h)).abs() < 1e-13 * (1.0 + a.abs() + b.abs()) * 10.0);
        }
    }
}
