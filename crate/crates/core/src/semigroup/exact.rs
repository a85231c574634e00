//! Characteristics solutions of the damped free transport equations.

use rayon::prelude::*;

use crate::dot;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::{PhaseGrid, WeightSpec};

/// Extension of a field outside the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero outside the box.
    Zero,
    /// Periodic with period `2L` in every axis.
    Periodic,
}

/// `int_0^t K(x - v s, v) ds` for the sharp kernel, exact.
///
/// Along the characteristic `sign((x - v s).v)` switches once, at `s* = x.v/|v|^2`.
pub fn damping_integral(chi: f64, x: &[f64], v: &[f64], t: f64) -> f64 {
    let vv = dot(v, v);
    if vv == 0.0 {
        return t;
    }
    let s_star = dot(x, v) / vv;
    t + chi * (2.0 * s_star - t).clamp(-t, t)
}

/// Linear (bilinear in dim 2) interpolation of velocity slice `j` at position `y`.
fn interpolate(grid: &PhaseGrid, values: &[f64], j: usize, y: &[f64], boundary: Boundary) -> f64 {
    let n = grid.n_x() as isize;
    let n_v = grid.n_v();
    let dx = grid.dx();
    let l = grid.half_width();
    let index = |k: isize| -> Option<usize> {
        match boundary {
            Boundary::Zero => (0..n).contains(&k).then_some(k as usize),
            Boundary::Periodic => Some(k.rem_euclid(n) as usize),
        }
    };
    // position in units of cells relative to the first centre
    let split = |z: f64| {
        let s = (z + l) / dx - 0.5;
        let k = s.floor();
        (k as isize, s - k)
    };
    match grid.dim() {
        1 => {
            let (k, th) = split(y[0]);
            let a = index(k).map(|c| values[c * n_v + j]).unwrap_or(0.0);
            let b = index(k + 1).map(|c| values[c * n_v + j]).unwrap_or(0.0);
            (1.0 - th) * a + th * b
        }
        _ => {
            let (kx, tx) = split(y[0]);
            let (ky, ty) = split(y[1]);
            let at = |a: isize, b: isize| match (index(a), index(b)) {
                (Some(i), Some(k)) => values[grid.cell_of([i, k]) * n_v + j],
                _ => 0.0,
            };
            (1.0 - ty) * ((1.0 - tx) * at(kx, ky) + tx * at(kx + 1, ky))
                + ty * ((1.0 - tx) * at(kx, ky + 1) + tx * at(kx + 1, ky + 1))
        }
    }
}

fn characteristics(
    f0: &DistributionField,
    t: f64,
    boundary: Boundary,
    source: &[f64],
    node_value: impl Fn(&[f64], &[f64], &[f64], f64) -> f64 + Sync,
) -> Result<DistributionField> {
    if t < 0.0 {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(f0.clone());
    }
    let grid = f0.grid().clone();
    let dim = grid.dim();
    let n_v = grid.n_v();
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(n_v).enumerate().for_each(|(cell, row)| {
        let pos = grid.position(cell);
        let x = &pos[..dim];
        for (j, slot) in row.iter_mut().enumerate() {
            let v = grid.velocity(j);
            let mut y = [0.0; 2];
            for a in 0..dim {
                y[a] = x[a] - v[a] * t;
            }
            let s = interpolate(&grid, source, j, &y[..dim], boundary);
            *slot = node_value(x, &y[..dim], v, s);
        }
    });
    DistributionField::from_values(grid, out)
}

/// Transport with loss `K = 1 + chi sign(x.v)` solved along characteristics.
pub fn b0_evolve_exact(f0: &DistributionField, t: f64, chi: f64) -> Result<DistributionField> {
    characteristics(f0, t, Boundary::Zero, f0.values(), |x, _, v, s| {
        s * (-damping_integral(chi, x, v, t)).exp()
    })
}

/// As [`b0_evolve_exact`], interpolating `m f0` instead of `f0` for a spatial weight `m`.
///
/// The weighted interpolant satisfies the weighted contraction bounds node by node.
pub fn b0_evolve_exact_weighted(
    f0: &DistributionField,
    t: f64,
    chi: f64,
    weight: &WeightSpec,
) -> Result<DistributionField> {
    if !weight.is_spatial() {
        return Err(Error::Domain(
            "weighted characteristics need a position-only weight".into(),
        ));
    }
    let grid = f0.grid();
    let dim = grid.dim();
    let n_v = grid.n_v();
    let weighted: Vec<f64> = f0
        .values()
        .iter()
        .enumerate()
        .map(|(idx, f)| {
            let pos = grid.position(idx / n_v);
            f * weight.eval(&pos[..dim], &[])
        })
        .collect();
    characteristics(f0, t, Boundary::Zero, &weighted, |x, y, v, s| {
        s / weight.eval(y, &[]) * (-damping_integral(chi, x, v, t)).exp()
    })
}

/// Transport with unit damping: `f0(x - v t, v) exp(-t)`.
pub fn transport_damped_evolve(
    f0: &DistributionField,
    t: f64,
    boundary: Boundary,
) -> Result<DistributionField> {
    let damp = (-t).exp();
    characteristics(f0, t, boundary, f0.values(), |_, _, _, s| s * damp)
}

/// Velocity average `rho(x_i) = sum_j w_j phi(x_i, v_j) f(x_i, v_j)`.
pub fn averaging_apply(phi: impl Fn(&[f64], &[f64]) -> f64, f: &DistributionField) -> Vec<f64> {
    let grid = f.grid();
    let dim = grid.dim();
    let w = grid.v_weights();
    (0..grid.n_cells())
        .map(|cell| {
            let pos = grid.position(cell);
            (0..grid.n_v())
                .map(|j| w[j] * phi(&pos[..dim], grid.velocity(j)) * f.get(cell, j))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridSpec, KernelSpec, KernelVariant};
    use std::sync::Arc;

    fn line(n_x: usize, n_v: usize) -> Arc<PhaseGrid> {
        Arc::new(PhaseGrid::new(GridSpec::line(30.0, n_x, n_v)).unwrap())
    }

    #[test]
    fn damping_integral_reference_points() {
        assert!(((-damping_integral(0.5, &[2.0], &[0.25], 1.0)).exp() - 0.223130).abs() < 1e-6);
        assert!(((-damping_integral(0.5, &[0.1], &[0.25], 1.0)).exp() - 0.406570).abs() < 1e-6);
        assert!(
            (damping_integral(0.5, &[0.1], &[0.25], 1.0) - (1.5 * 0.4 + 0.5 * 0.6)).abs() < 1e-15
        );
        assert_eq!(damping_integral(0.5, &[3.0], &[0.0], 2.0), 2.0);
    }

    #[test]
    fn damping_integral_matches_quadrature() {
        let chi = 0.5;
        for &(x, y, v, w, t) in &[
            (0.3, -1.0, 0.2, 0.4, 3.0),
            (-2.0, 0.5, -0.1, 0.3, 7.0),
            (1.0, 1.0, -0.5, -0.5, 1.5),
        ] {
            let n = 200_000;
            let h = t / n as f64;
            let quad: f64 = (0..n)
                .map(|k| {
                    let s = (k as f64 + 0.5) * h;
                    let d = (x - v * s) * v + (y - w * s) * w;
                    1.0 + chi * d.signum()
                })
                .sum::<f64>()
                * h;
            assert!((damping_integral(chi, &[x, y], &[v, w], t) - quad).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_field_along_characteristics() {
        let g = line(1200, 32);
        let f0 = DistributionField::from_fn(g.clone(), |_, _| 1.0);
        let f = b0_evolve_exact(&f0, 1.0, 0.5).unwrap();
        // node (x = 2.025, v = 0.234375): no switch along the characteristic
        let cell = g.axis_cell(2.025).unwrap();
        let j = 23;
        let (x, v) = (g.axis()[cell], g.velocity(j)[0]);
        let expected = (-(1.0 + 0.5 * (2.0 * x * v / (v * v) - 1.0).clamp(-1.0, 1.0))).exp();
        assert!((f.get(cell, j) - expected).abs() < 1e-14);
        assert_eq!(
            b0_evolve_exact(&f0, 0.0, 0.5).unwrap().values(),
            f0.values()
        );
    }

    #[test]
    fn damped_transport_mass_and_mode() {
        let g = line(400, 16);
        let f0 = DistributionField::from_fn(g.clone(), |x, _| (-(x[0] * x[0])).exp());
        let f = transport_damped_evolve(&f0, 2.0, Boundary::Zero).unwrap();
        assert!((f.mass() - (-2.0f64).exp() * f0.mass()).abs() < 1e-10);

        let ones = DistributionField::from_fn(g.clone(), |_, _| 1.0);
        let p = transport_damped_evolve(&ones, 1.0, Boundary::Periodic).unwrap();
        assert!(p
            .values()
            .iter()
            .all(|v| (v - (-1.0f64).exp()).abs() < 1e-14));

        // a single mode stays proportional to itself after velocity averaging
        let l = g.half_width();
        let k = std::f64::consts::PI / l;
        let mode = DistributionField::from_fn(g.clone(), |x, _| (k * x[0]).cos());
        let t = 3.0;
        let rho = averaging_apply(
            |_, _| 1.0,
            &transport_damped_evolve(&mode, t, Boundary::Periodic).unwrap(),
        );
        // quadrature of cos(k(x - v t)) over the velocity nodes, with linear interpolation of the mode
        let factor: f64 = (0..16)
            .map(|j| (k * g.velocity(j)[0] * t).cos() / 16.0)
            .sum::<f64>()
            * (-t).exp();
        for (i, r) in rho.iter().enumerate() {
            assert!((r - factor * (k * g.axis()[i]).cos()).abs() < 1e-4);
        }
    }

    #[test]
    fn averaging_basics() {
        let g = line(60, 8);
        let ones = DistributionField::from_fn(g.clone(), |_, _| 1.0);
        assert!(averaging_apply(|_, _| 1.0, &ones)
            .iter()
            .all(|r| (r - 1.0).abs() < 1e-15));
        let even = DistributionField::from_fn(g.clone(), |x, v| x[0].cos() * (1.0 + v[0] * v[0]));
        assert!(averaging_apply(|_, v| v[0], &even)
            .iter()
            .all(|r| r.abs() < 1e-15));
        let k = KernelSpec::new(
            0.5,
            KernelVariant::Surgical {
                r: 2.0,
                delta1: 0.05,
                delta2: 0.1,
                delta3: 0.1,
            },
            0.5,
        )
        .unwrap();
        let far = DistributionField::from_fn(g, |x, _| if x[0].abs() > 4.0 { 1.0 } else { 0.0 });
        assert!(averaging_apply(|x, v| k.eval_unchecked(x, v), &far)
            .iter()
            .all(|&r| r == 0.0));
    }
}
