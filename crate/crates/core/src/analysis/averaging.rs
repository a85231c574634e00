use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::{GridSpec, PhaseGrid};
use crate::semigroup::{averaging_apply, transport_damped_evolve, Boundary};

/// Homogeneous `H^{1/2}` seminorm of a spatial field through its periodic extension:
/// `sum_k |xi_k| |rho^_k|^2 dxi^d` with `xi_k = pi k / L`.
pub fn hhalf_seminorm(rho: &[f64], grid: &PhaseGrid) -> f64 {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(grid.n_x());
    seminorm_with(rho, grid, fft.as_ref())
}

fn seminorm_with(rho: &[f64], grid: &PhaseGrid, fft: &dyn Fft<f64>) -> f64 {
    assert_eq!(rho.len(), grid.n_cells());
    let n = grid.n_x();
    let l = grid.half_width();
    let dxi = std::f64::consts::PI / l;
    let wavenumber = |k: usize| {
        if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        }
    };
    let mut data: Vec<Complex<f64>> = rho.iter().map(|&r| Complex::new(r, 0.0)).collect();
    let scale = grid.cell_volume();
    let sum = match grid.dim() {
        1 => {
            fft.process(&mut data);
            data.iter()
                .enumerate()
                .map(|(k, c)| (wavenumber(k) * dxi).abs() * c.norm_sqr())
                .sum::<f64>()
                * dxi
        }
        _ => {
            // rows are contiguous along axis 0
            for row in data.chunks_mut(n) {
                fft.process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); n];
            let mut total = 0.0;
            for i in 0..n {
                for k in 0..n {
                    col[k] = data[i + n * k];
                }
                fft.process(&mut col);
                for (k, c) in col.iter().enumerate() {
                    let xi = dxi * (wavenumber(i).powi(2) + wavenumber(k).powi(2)).sqrt();
                    total += xi * c.norm_sqr();
                }
            }
            total * dxi * dxi
        }
    };
    (sum * scale * scale).sqrt()
}

/// Antiderivative of the periodic piecewise-linear interpolant of one velocity slice.
struct PeriodicPrimitive {
    dx: f64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PeriodicPrimitive {
    fn new(dx: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..n {
            acc += 0.5 * dx * (values[i] + values[(i + 1) % n]);
            cumulative.push(acc);
        }
        Self {
            dx,
            values,
            cumulative,
        }
    }

    /// Adds `scale * P(x_i + shift dx)` to `out[i]` for every node `x_i`, where `P` is the
    /// primitive anchored at the first node.
    fn add_shifted(&self, shift: f64, scale: f64, out: &mut [f64]) {
        let n = self.values.len();
        let total = self.cumulative[n];
        let k = shift.floor();
        let theta = shift - k;
        let k = k as i64;
        let mut q = k.div_euclid(n as i64) as f64;
        let mut r = k.rem_euclid(n as i64) as usize;
        let (c1, c2) = (self.dx * theta, 0.5 * self.dx * theta * theta);
        for o in out.iter_mut() {
            let a = self.values[r];
            let b = if r + 1 == n {
                self.values[0]
            } else {
                self.values[r + 1]
            };
            *o += scale * (q * total + self.cumulative[r] + c1 * a + c2 * (b - a));
            r += 1;
            if r == n {
                r = 0;
                q += 1.0;
            }
        }
    }
}

/// Exact velocity-cell averages of free transport for a fixed initial field.
struct CellAverager {
    dx: f64,
    slices: Vec<(PeriodicPrimitive, f64, f64)>,
}

impl CellAverager {
    /// `None` unless the grid is a one-dimensional ball grid.
    fn new(f0: &DistributionField) -> Option<Self> {
        let grid = f0.grid();
        let n_v = grid.n_v();
        let n = grid.n_x();
        let dx = grid.dx();
        let slices = (0..n_v)
            .map(|j| {
                let (a, b) = grid.velocity_cell_edges(j)?;
                let slice = (0..n).map(|i| f0.values()[i * n_v + j]).collect();
                Some((PeriodicPrimitive::new(dx, slice), a, b))
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self { dx, slices })
    }

    fn average(&self, t: f64, out: &mut Vec<f64>) {
        let n = self.slices[0].0.values.len();
        out.clear();
        out.resize(n, 0.0);
        for (p, a, b) in &self.slices {
            p.add_shifted(-a * t / self.dx, 1.0 / t, out);
            p.add_shifted(-b * t / self.dx, -1.0 / t, out);
        }
    }
}

/// Velocity average `int f0(x - v t, v) dv` of undamped free transport with periodic
/// extension, integrating exactly over each velocity cell of a one-dimensional ball
/// grid. Other grids use nodal quadrature of the characteristics solution.
pub fn averaging_functional(f0: &DistributionField, t: f64) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    match CellAverager::new(f0) {
        Some(avg) if t > 0.0 => {
            let mut rho = Vec::new();
            avg.average(t, &mut rho);
            Ok(rho)
        }
        _ => nodal_average(f0, t),
    }
}

fn nodal_average(f0: &DistributionField, t: f64) -> Result<Vec<f64>> {
    let damped = transport_damped_evolve(f0, t, Boundary::Periodic)?;
    let mut rho = averaging_apply(|_, _| 1.0, &damped);
    let undamp = t.exp();
    rho.iter_mut().for_each(|r| *r *= undamp);
    Ok(rho)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AveragingOptions {
    pub t_max: f64,
    /// Geometric time grid on `[t_geometric_min, 1]`.
    pub t_geometric_min: f64,
    pub n_geometric: usize,
    /// Uniform step on `[1, t_max]`.
    pub dt_uniform: f64,
}

impl Default for AveragingOptions {
    fn default() -> Self {
        Self {
            t_max: 40.0,
            t_geometric_min: 1e-4,
            n_geometric: 200,
            dt_uniform: 0.01,
        }
    }
}

impl AveragingOptions {
    pub fn times(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        let ratio = (1.0 / self.t_geometric_min).ln() / (self.n_geometric - 1) as f64;
        for k in 0..self.n_geometric {
            t.push(self.t_geometric_min * (ratio * k as f64).exp());
        }
        let steps = ((self.t_max - 1.0) / self.dt_uniform).round() as usize;
        for k in 1..=steps {
            t.push(1.0 + k as f64 * self.dt_uniform);
        }
        t
    }
}

/// `J = int_0^{t_max} || A S_T(t) f0 ||^2_{H^{1/2}} e^{2t} dt / || f0 ||^2_{L2}` by trapezoid.
///
/// The unit damping of `S_T` cancels the `e^{2t}` factor, so the undamped average is used.
pub fn averaging_ratio(f0: &DistributionField, opts: &AveragingOptions) -> Result<f64> {
    let l2 = f0.weighted_sum(|_, _, v| v * v);
    if l2 == 0.0 {
        return Ok(0.0);
    }
    let times = opts.times();
    let grid = f0.grid();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(grid.n_x());
    let averager = CellAverager::new(f0);
    let mut rho = Vec::new();
    let mut values = Vec::with_capacity(times.len());
    for &t in &times {
        match &averager {
            Some(avg) if t > 0.0 => avg.average(t, &mut rho),
            _ => rho = nodal_average(f0, t)?,
        }
        values.push(seminorm_with(&rho, grid, fft.as_ref()).powi(2));
    }
    let integral: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(integral / l2)
}

/// Embeds a field in a box of twice the half-width at the same spacing, zero outside.
pub fn zero_pad(f: &DistributionField) -> Result<DistributionField> {
    let grid = f.grid();
    let spec = GridSpec {
        half_width: 2.0 * grid.half_width(),
        n_x: 2 * grid.n_x(),
        ..*grid.spec()
    };
    let big = Arc::new(PhaseGrid::new(spec)?);
    let n_v = grid.n_v();
    let offset = grid.n_x() / 2;
    let mut out = DistributionField::zeros(big.clone());
    for cell in 0..grid.n_cells() {
        let idx = grid.cell_indices(cell);
        let mut shifted = [0; 2];
        for a in 0..grid.dim() {
            shifted[a] = idx[a] + offset;
        }
        let target = big.cell_of(shifted);
        out.values_mut()[target * n_v..(target + 1) * n_v]
            .copy_from_slice(&f.values()[cell * n_v..(cell + 1) * n_v]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct AveragingReport {
    pub n_x: usize,
    pub refined_n_x: usize,
    pub j_coarse: Vec<f64>,
    pub j_fine: Vec<f64>,
    pub max_j_coarse: f64,
    pub max_j_fine: f64,
    /// `max_j_fine / max_j_coarse`.
    pub refinement_ratio: f64,
    /// Max J on the coarse grid recomputed in a box of twice the size.
    pub max_j_padded: f64,
    /// `|max_j_padded / max_j_coarse - 1|`.
    pub leakage: f64,
    pub verdict: Verdict,
}

/// Averaging regularity probe: `J` over a family built on a grid and on its refinement
/// (`n_x` doubled); passes when both maxima are finite and agree within 20%.
pub fn averaging_probe(
    spec: &GridSpec,
    family: impl Fn(&Arc<PhaseGrid>) -> Vec<DistributionField>,
    opts: &AveragingOptions,
) -> Result<AveragingReport> {
    let coarse = Arc::new(PhaseGrid::new(*spec)?);
    let fine = Arc::new(PhaseGrid::new(GridSpec {
        n_x: 2 * spec.n_x,
        ..*spec
    })?);
    let j_of = |fields: &[DistributionField]| {
        fields
            .par_iter()
            .map(|f| averaging_ratio(f, opts))
            .collect::<Result<Vec<f64>>>()
    };
    let coarse_family = family(&coarse);
    let j_coarse = j_of(&coarse_family)?;
    let j_fine = j_of(&family(&fine))?;
    let padded = coarse_family
        .iter()
        .map(zero_pad)
        .collect::<Result<Vec<_>>>()?;
    let j_padded = j_of(&padded)?;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (mc, mf, mp) = (max(&j_coarse), max(&j_fine), max(&j_padded));
    let refinement_ratio = mf / mc;
    let ok = mc.is_finite() && mf.is_finite() && (refinement_ratio - 1.0).abs() <= 0.2;
    Ok(AveragingReport {
        n_x: spec.n_x,
        refined_n_x: 2 * spec.n_x,
        j_coarse,
        j_fine,
        max_j_coarse: mc,
        max_j_fine: mf,
        refinement_ratio,
        max_j_padded: mp,
        leakage: (mp / mc - 1.0).abs(),
        verdict: Verdict::from_bool(ok),
    })
}
