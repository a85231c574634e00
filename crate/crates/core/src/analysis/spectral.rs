use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_decay_auto, FitMode, RateFit};
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::semigroup::{evolve_with, DtPolicy, Generator, ShiftedBlockSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    /// Krylov subspace dimension per cycle.
    pub dim: usize,
    /// Real shift of the shift-invert transform.
    pub sigma: f64,
    pub max_restarts: usize,
    /// Absolute tolerance on `|| G y - lambda y ||_2` for unit `y`.
    pub tol: f64,
    /// Number of rightmost eigenvalues wanted.
    pub n_eigs: usize,
    /// Time step of the propagator transform used when no direct solver applies.
    pub tau: f64,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            dim: 60,
            sigma: 0.01,
            max_restarts: 30,
            tol: 1e-9,
            n_eigs: 2,
            tau: 2.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KrylovTransform {
    ShiftInvert,
    Propagator,
}

#[derive(Debug, Clone, Serialize)]
pub struct KrylovReport {
    pub transform: KrylovTransform,
    /// `(re, im)` sorted by decreasing real part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
    pub restarts: usize,
    pub converged: bool,
}

impl KrylovReport {
    /// Real part of the `k`-th rightmost eigenvalue.
    pub fn real(&self, k: usize) -> Option<f64> {
        self.eigenvalues.get(k).map(|e| e.0)
    }
}

/// Subtracts the steady-state component: `f - mass(f) G` for mass-1 `G`.
pub fn project_out(f: &DistributionField, steady: &DistributionField) -> Result<DistributionField> {
    let mut out = f.clone();
    out.axpy(-f.mass() / steady.mass(), steady)?;
    Ok(out)
}

// sequential so that results do not depend on the thread count
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

enum Transform<'a> {
    ShiftInvert(ShiftedBlockSolver),
    Propagator { gen: &'a Generator, tau: f64 },
}

impl Transform<'_> {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Transform::ShiftInvert(s) => Ok(s.solve(x)),
            Transform::Propagator { gen, tau } => {
                let f = DistributionField::from_values(gen.grid().clone(), x.to_vec())?;
                Ok(
                    evolve_with(gen, &f, *tau, *tau, DtPolicy::default(), |_, _, _| Ok(()))?
                        .0
                        .into_values(),
                )
            }
        }
    }

    fn to_lambda(&self, mu: Complex<f64>) -> Complex<f64> {
        match self {
            Transform::ShiftInvert(s) => Complex::new(s.sigma(), 0.0) + Complex::new(1.0, 0.0) / mu,
            Transform::Propagator { tau, .. } => mu.ln() / *tau,
        }
    }

    fn kind(&self) -> KrylovTransform {
        match self {
            Transform::ShiftInvert(_) => KrylovTransform::ShiftInvert,
            Transform::Propagator { .. } => KrylovTransform::Propagator,
        }
    }
}

/// Eigenvector of a small complex matrix for an approximate eigenvalue, by inverse iteration.
fn small_eigvec(h: &DMatrix<Complex<f64>>, mu: Complex<f64>) -> DVector<Complex<f64>> {
    let m = h.nrows();
    let shift = mu + Complex::new(1e-10 * mu.norm().max(1e-300), 0.0);
    let a = h - DMatrix::<Complex<f64>>::identity(m, m) * shift;
    let lu = a.lu();
    let mut s = DVector::from_element(m, Complex::new(1.0, 0.0));
    for _ in 0..3 {
        if let Some(next) = lu.solve(&s) {
            let n = next.norm();
            if n.is_finite() && n > 0.0 {
                s = next / Complex::new(n, 0.0);
            }
        }
    }
    s
}

/// Rightmost eigenvalues of `gen` by restarted Arnoldi on a transformed operator:
/// shift-invert `(G - sigma)^{-1}` for one-dimensional upwind generators, the
/// propagator `exp(tau G)` otherwise.
pub fn krylov_rightmost(gen: &Generator, opts: &KrylovOptions) -> Result<KrylovReport> {
    let n = gen.grid().len();
    let m = opts.dim.min(n);
    if m < opts.n_eigs + 2 {
        return Err(Error::Config(format!(
            "Krylov dimension {m} too small for {} eigenvalues",
            opts.n_eigs
        )));
    }
    let transform = match ShiftedBlockSolver::new(gen, opts.sigma) {
        Ok(s) => Transform::ShiftInvert(s),
        Err(_) => Transform::Propagator { gen, tau: opts.tau },
    };
    let mut start: Vec<f64> = DistributionField::noise(gen.grid().clone(), opts.seed).into_values();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut best: Option<KrylovReport> = None;
    for restart in 0..=opts.max_restarts {
        let s0 = norm(&start);
        let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / s0).collect()];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut size = m;
        for k in 0..m {
            let mut w = transform.apply(&basis[k])?;
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = dot(&w, b);
                    h[(i, k)] += c;
                    w.par_iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let beta = norm(&w);
            h[(k + 1, k)] = beta;
            if beta < 1e-14 {
                size = k + 1;
                break;
            }
            basis.push(w.into_iter().map(|x| x / beta).collect());
        }
        let hm = h.view((0, 0), (size, size)).into_owned();
        let mus = hm.clone().complex_eigenvalues();
        let hc = hm.map(|x| Complex::new(x, 0.0));
        let mut ritz: Vec<(Complex<f64>, Complex<f64>)> = mus
            .iter()
            .map(|&mu| (transform.to_lambda(mu), mu))
            .filter(|(l, _)| l.re.is_finite())
            .collect();
        ritz.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
        ritz.truncate(opts.n_eigs);
        let mut eigenvalues = Vec::new();
        let mut residuals = Vec::new();
        let mut next_start = vec![0.0; n];
        for (lambda, mu) in &ritz {
            let s = small_eigvec(&hc, *mu);
            let mut yr = vec![0.0; n];
            let mut yi = vec![0.0; n];
            for (k, b) in basis.iter().take(size).enumerate() {
                let c = s[k];
                yr.par_iter_mut()
                    .zip(yi.par_iter_mut())
                    .zip(b)
                    .for_each(|((r, i), x)| {
                        *r += c.re * x;
                        *i += c.im * x;
                    });
            }
            gen.apply(&yr, &mut gx);
            gen.apply(&yi, &mut gy);
            let mut res2 = 0.0;
            let mut y2 = 0.0;
            for i in 0..n {
                let rr = gx[i] - (lambda.re * yr[i] - lambda.im * yi[i]);
                let ri = gy[i] - (lambda.re * yi[i] + lambda.im * yr[i]);
                res2 += rr * rr + ri * ri;
                y2 += yr[i] * yr[i] + yi[i] * yi[i];
            }
            residuals.push((res2 / y2).sqrt());
            eigenvalues.push((lambda.re, lambda.im));
            let scale = 1.0 / y2.sqrt();
            for i in 0..n {
                next_start[i] += scale * (yr[i] + yi[i]);
            }
        }
        let converged = residuals.iter().all(|r| *r < opts.tol);
        let report = KrylovReport {
            transform: transform.kind(),
            eigenvalues,
            residuals,
            restarts: restart,
            converged,
        };
        if converged {
            return Ok(report);
        }
        best = Some(report);
        // keep a little of the previous start so lost directions can re-enter
        next_start
            .iter_mut()
            .zip(&start)
            .for_each(|(a, b)| *a += 1e-3 * b / s0);
        start = next_start;
    }
    Ok(best.expect("at least one Arnoldi cycle"))
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub fits: Vec<RateFit>,
    /// Largest (least negative) fitted slope.
    pub worst_slope: f64,
    /// `(max - min) / |mean|` of the fitted slopes.
    pub spread: f64,
    /// Probes with a nonnegative fitted slope.
    pub flagged: Vec<usize>,
    /// `|mass|` of each projected probe.
    pub projected_mass: Vec<f64>,
    pub times: Vec<f64>,
    /// `|| S(t) P f ||_{L1}` for each probe.
    pub series: Vec<Vec<f64>>,
    pub krylov: Option<KrylovReport>,
    /// `|worst_slope - lambda_2| / |lambda_2|` when the Krylov estimate is available.
    pub relative_agreement: Option<f64>,
}

/// Decay of mass-zero perturbations of the steady state.
///
/// Each probe is projected, evolved over `horizon`, and `|| S(t) P f ||_{L1}` is fitted
/// exponentially on `[t1, horizon]` with `t1` in `[horizon/3, 2 horizon/3]` chosen to
/// maximize r².
pub fn spectral_gap(
    gen: &Generator,
    steady: &DistributionField,
    probes: &[DistributionField],
    horizon: f64,
    record_every: f64,
    policy: DtPolicy,
    krylov: Option<&KrylovOptions>,
) -> Result<GapReport> {
    if probes.is_empty() {
        return Err(Error::Config(
            "spectral gap needs at least one probe".into(),
        ));
    }
    let results: Vec<Result<(f64, Vec<f64>, Vec<f64>, RateFit)>> = probes
        .par_iter()
        .map(|p| {
            let projected = project_out(p, steady)?;
            let pm = projected.mass().abs();
            let mut times = Vec::new();
            let mut series = Vec::new();
            evolve_with(gen, &projected, horizon, record_every, policy, |t, f, _| {
                times.push(t);
                series.push(f.weighted_sum(|_, _, v| v.abs()));
                Ok(())
            })?;
            let fit = fit_decay_auto(
                &times,
                &series,
                (horizon / 3.0, 2.0 * horizon / 3.0),
                horizon,
                FitMode::Exponential,
            )?;
            Ok((pm, times, series, fit))
        })
        .collect();
    let mut fits = Vec::new();
    let mut series = Vec::new();
    let mut projected_mass = Vec::new();
    let mut times = Vec::new();
    for r in results {
        let (pm, t, s, fit) = r?;
        projected_mass.push(pm);
        times = t;
        series.push(s);
        fits.push(fit);
    }
    let slopes: Vec<f64> = fits.iter().map(|f| f.slope).collect();
    let worst_slope = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let flagged = slopes
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= 0.0)
        .map(|(i, _)| i)
        .collect();
    let krylov = krylov.map(|o| krylov_rightmost(gen, o)).transpose()?;
    let relative_agreement = krylov
        .as_ref()
        .and_then(|k| k.real(1))
        .map(|l2| (worst_slope - l2).abs() / l2.abs());
    Ok(GapReport {
        fits,
        worst_slope,
        spread: (worst_slope - min) / mean.abs(),
        flagged,
        projected_mass,
        times,
        series,
        krylov,
        relative_agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::steady::{steady_state, SteadyOptions};
    use crate::model::{GridSpec, KernelSpec, PhaseGrid};
    use crate::semigroup::{OperatorTag, Scheme};
    use std::sync::Arc;

    fn gen(n_x: usize, n_v: usize, scheme: Scheme) -> Generator {
        let g = Arc::new(PhaseGrid::new(GridSpec::line(20.0, n_x, n_v)).unwrap());
        Generator::assemble(
            OperatorTag::L,
            g,
            KernelSpec::sharp(0.5, 0.5).unwrap(),
            scheme,
        )
        .unwrap()
    }

    fn dense_rightmost(gen: &Generator) -> Vec<f64> {
        let a = gen.to_dense().unwrap();
        let n = a.len();
        let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let mut re: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
        re.sort_by(|a, b| b.total_cmp(a));
        re
    }

    #[test]
    fn shift_invert_matches_dense_eigensolver() {
        let g = gen(40, 4, Scheme::Upwind);
        let dense = dense_rightmost(&g);
        let k = krylov_rightmost(
            &g,
            &KrylovOptions {
                dim: 40,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(k.transform, KrylovTransform::ShiftInvert);
        assert!(k.converged);
        assert!((k.eigenvalues[0].0 - dense[0]).abs() < 1e-8);
        assert!((k.eigenvalues[1].0 - dense[1]).abs() < 1e-8);
    }

    #[test]
    fn propagator_transform_for_nonlinear_scheme() {
        let g = gen(40, 4, Scheme::Muscl);
        let k = krylov_rightmost(
            &g,
            &KrylovOptions {
                dim: 30,
                tol: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(k.transform, KrylovTransform::Propagator);
        assert!(k.eigenvalues[0].0.abs() < 1e-3);
    }

    #[test]
    fn rightmost_is_zero_and_probes_decay() {
        let g = gen(160, 8, Scheme::Upwind);
        let s = steady_state(
            &g,
            &SteadyOptions {
                tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let k = krylov_rightmost(&g, &KrylovOptions::default()).unwrap();
        assert!(k.eigenvalues[0].0.abs() < 1e-8, "{:?}", k.eigenvalues);
        let probes: Vec<DistributionField> = (0..3)
            .map(|i| {
                let c = i as f64 - 1.0;
                DistributionField::from_fn(g.grid().clone(), move |x, v| {
                    (-(x[0] - 2.0 * c).powi(2)).exp() * (1.0 + c * v[0])
                })
            })
            .collect();
        for p in &probes {
            assert!(project_out(p, &s.field).unwrap().mass().abs() < 1e-13);
        }
        let r = spectral_gap(
            &g,
            &s.field,
            &probes,
            300.0,
            1.0,
            DtPolicy::default(),
            Some(&KrylovOptions::default()),
        )
        .unwrap();
        assert!(r.flagged.is_empty());
        assert!(r.worst_slope < 0.0);
        assert!(
            r.relative_agreement.unwrap() < 0.2,
            "{:?} {:?}",
            r.worst_slope,
            r.krylov
        );
    }
}
