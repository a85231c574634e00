use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_decay, fit_decay_auto, FitMode, RateFit};
use super::lyapunov::tilde_functional;
use super::norms::{weighted_norm, NormKind};
use super::Verdict;
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::{japanese_bracket, model_constants, PhaseGrid, WeightSpec};
use crate::semigroup::{
    averaging_apply, b0_evolve_exact, b0_evolve_exact_weighted, evolve_with, DtPolicy, Generator,
    OperatorTag,
};

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub gamma: f64,
    /// `chi + gamma v0 - 1`.
    pub rate: f64,
    pub times: Vec<f64>,
    /// `log(|| S(t) f0 || / || f0 ||) - rate t` in `L1(m)`.
    pub excess_l1: Vec<f64>,
    /// Same in `Linf(m)`.
    pub excess_linf: Vec<f64>,
    pub max_excess: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Weighted contraction of the exact transport-with-loss semigroup in `L1(m)` and
/// `Linf(m)`, `m = exp(gamma <x>)`, checked on a log scale with tolerance `1e-8`.
pub fn b0_contraction_probe(
    f0: &DistributionField,
    chi: f64,
    gamma: f64,
    times: &[f64],
) -> Result<ContractionReport> {
    let grid = f0.grid();
    let rate = chi + gamma * grid.speed() - 1.0;
    let w = WeightSpec::Exponential { gamma };
    let n1 = weighted_norm(f0, NormKind::L1, &w)?.value;
    let ninf = weighted_norm(f0, NormKind::Linf, &w)?.value;
    if n1 == 0.0 {
        return Err(Error::Domain(
            "contraction probe needs a nonzero field".into(),
        ));
    }
    let rows: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let s = b0_evolve_exact_weighted(f0, t, chi, &w)?;
            let e1 = (weighted_norm(&s, NormKind::L1, &w)?.value / n1).ln() - rate * t;
            let einf = (weighted_norm(&s, NormKind::Linf, &w)?.value / ninf).ln() - rate * t;
            Ok((e1, einf))
        })
        .collect::<Result<_>>()?;
    let (excess_l1, excess_linf): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let max_excess = excess_l1
        .iter()
        .chain(&excess_linf)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let tolerance = 1e-8;
    Ok(ContractionReport {
        gamma,
        rate,
        times: times.to_vec(),
        excess_l1,
        excess_linf,
        max_excess,
        tolerance,
        verdict: Verdict::from_bool(max_excess <= tolerance),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionOptions {
    pub chi: f64,
    pub gamma: f64,
    pub blob_centres: Vec<f64>,
    pub sigma: f64,
    /// Log-spaced sample times in `[t_min, t_max]`.
    pub t_min: f64,
    pub t_max: f64,
    pub n_times: usize,
    /// Widths multiplying `sigma` for the nested-blob comparison at the first centre.
    pub nested_widths: Vec<f64>,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        Self {
            chi: 0.5,
            gamma: 0.0,
            blob_centres: vec![0.0, 1.0, 2.0],
            sigma: 0.1,
            t_min: 0.25,
            t_max: 20.0,
            n_times: 60,
            nested_widths: vec![1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionReport {
    pub a_star: f64,
    pub times: Vec<f64>,
    /// `Q(t)` per blob centre.
    pub q: Vec<Vec<f64>>,
    pub max_per_blob: Vec<f64>,
    pub max_q: f64,
    /// `max_q / max_per_blob[0]`.
    pub ratio: f64,
    /// `(width, max Q)` for nested blobs at the first centre; reported only.
    pub nested: Vec<(f64, f64)>,
    pub verdict: Verdict,
}

fn blob(grid: &Arc<PhaseGrid>, centre: f64, sigma: f64) -> DistributionField {
    DistributionField::from_fn(grid.clone(), |x, _| {
        let r2: f64 = x
            .iter()
            .enumerate()
            .map(|(a, xa)| {
                if a == 0 {
                    (xa - centre).powi(2)
                } else {
                    xa * xa
                }
            })
            .sum();
        (-0.5 * r2 / (sigma * sigma)).exp()
    })
}

fn q_series(
    f0: &DistributionField,
    opts: &DispersionOptions,
    a_star: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    let grid = f0.grid();
    let dim = grid.dim();
    let n_v = grid.n_v();
    let m = |cell: usize| {
        let p = grid.position(cell);
        (opts.gamma * japanese_bracket(&p[..dim])).exp()
    };
    let mut norm0 = 0.0;
    for cell in 0..grid.n_cells() {
        let sup = f0.values()[cell * n_v..(cell + 1) * n_v]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        norm0 += m(cell) * sup;
    }
    norm0 *= grid.cell_volume();
    times
        .par_iter()
        .map(|&t| {
            let s = b0_evolve_exact(f0, t, opts.chi)?;
            let rho = averaging_apply(|_, _| 1.0, &s);
            let sup = rho
                .iter()
                .enumerate()
                .fold(0.0f64, |a, (c, r)| a.max((m(c) * r).abs()));
            Ok(sup * t.powi(dim as i32) * (-a_star * t).exp() / norm0)
        })
        .collect()
}

/// Dispersion statistic `Q(t) = sup_x |m rho(t)| t^d exp(-a* t) / || f0 ||_{L1_x Linf_v(m)}`
/// for Gaussian blobs evolved by the exact transport-with-loss semigroup, with the
/// unit velocity average. Passes when the maximum over blobs and times is at most three
/// times the maximum for the first blob.
pub fn dispersion_probe(
    grid: &Arc<PhaseGrid>,
    opts: &DispersionOptions,
) -> Result<DispersionReport> {
    let c = model_constants(opts.chi, grid.dim())?;
    if !(opts.gamma >= 0.0 && opts.gamma < c.gamma_star) {
        return Err(Error::Domain(format!(
            "gamma must lie in [0, {}), got {}",
            c.gamma_star, opts.gamma
        )));
    }
    if opts.blob_centres.is_empty()
        || opts.n_times < 2
        || !(opts.t_min > 0.0 && opts.t_max > opts.t_min)
    {
        return Err(Error::Config(
            "dispersion probe needs blobs and a time range 0 < t_min < t_max".into(),
        ));
    }
    let a_star = c.a_star(opts.gamma);
    let ratio_t = (opts.t_max / opts.t_min).ln() / (opts.n_times - 1) as f64;
    let times: Vec<f64> = (0..opts.n_times)
        .map(|k| opts.t_min * (ratio_t * k as f64).exp())
        .collect();
    let q = opts
        .blob_centres
        .iter()
        .map(|&x0| q_series(&blob(grid, x0, opts.sigma), opts, a_star, &times))
        .collect::<Result<Vec<_>>>()?;
    let max_per_blob: Vec<f64> = q
        .iter()
        .map(|s| s.iter().copied().fold(0.0, f64::max))
        .collect();
    let max_q = max_per_blob.iter().copied().fold(0.0, f64::max);
    let ratio = max_q / max_per_blob[0];
    let nested = opts
        .nested_widths
        .iter()
        .map(|&w| {
            let s = q_series(
                &blob(grid, opts.blob_centres[0], w * opts.sigma),
                opts,
                a_star,
                &times,
            )?;
            Ok((w * opts.sigma, s.into_iter().fold(0.0, f64::max)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionReport {
        a_star,
        times,
        q,
        max_per_blob,
        max_q,
        ratio,
        nested,
        verdict: Verdict::from_bool(max_q.is_finite() && ratio <= 3.0),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    pub gamma: f64,
    pub beta: f64,
    pub times: Vec<f64>,
    /// `sum |f| m~` at each recorded time.
    pub series: Vec<f64>,
    /// Recorded steps where the series increased.
    pub increases: usize,
    pub fit: RateFit,
    pub verdict: Verdict,
}

/// Evolves under `B1` and checks that `sum |f| m~` never increases and decays exponentially
/// (negative fitted slope with r² >= 0.99 on an automatically chosen window in the last
/// two thirds).
pub fn b1_dissipation_probe(
    gen_b1: &Generator,
    f0: &DistributionField,
    gamma: f64,
    horizon: f64,
    record_every: f64,
    policy: DtPolicy,
) -> Result<DissipationReport> {
    if gen_b1.tag() != OperatorTag::B1 {
        return Err(Error::Domain(format!(
            "dissipation probe needs tag B1, got {:?}",
            gen_b1.tag()
        )));
    }
    let w = WeightSpec::tilde_exp(gen_b1.kernel().chi, gamma);
    w.validate(gen_b1.kernel().chi, gen_b1.grid())?;
    let mut times = Vec::new();
    let mut series = Vec::new();
    evolve_with(gen_b1, f0, horizon, record_every, policy, |t, f, _| {
        times.push(t);
        series.push(tilde_functional(f, &w));
        Ok(())
    })?;
    let increases = series.windows(2).filter(|s| s[1] > s[0]).count();
    let fit = fit_decay_auto(
        &times,
        &series,
        (horizon / 3.0, 2.0 * horizon / 3.0),
        horizon,
        FitMode::Exponential,
    )?;
    let ok = increases == 0 && fit.slope < 0.0 && fit.r_squared >= 0.99;
    let beta = match w {
        WeightSpec::TildeExp { beta, .. } => beta,
        _ => unreachable!(),
    };
    Ok(DissipationReport {
        gamma,
        beta,
        times,
        series,
        increases,
        fit,
        verdict: Verdict::from_bool(ok),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PolyDecayReport {
    pub k: f64,
    pub ell: f64,
    /// `M_k(|f0|)`.
    pub initial_moment_k: f64,
    pub times: Vec<f64>,
    /// `|| f(t) ||_{L1_ell}`.
    pub series: Vec<f64>,
    pub fit: RateFit,
    /// `-(k - ell) + 0.3`.
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Polynomial moment decay under `B1`: fits `|| f(t) ||_{L1_ell}` against `<t>` on `window`
/// and passes when the exponent is at most `-(k - ell) + 0.3`.
pub fn b1_poly_decay_probe(
    gen_b1: &Generator,
    k: f64,
    ell: f64,
    f0: &DistributionField,
    window: (f64, f64),
    record_every: f64,
    policy: DtPolicy,
) -> Result<PolyDecayReport> {
    if gen_b1.tag() != OperatorTag::B1 {
        return Err(Error::Domain(format!(
            "polynomial decay probe needs tag B1, got {:?}",
            gen_b1.tag()
        )));
    }
    if !(ell > 0.0 && ell < k) {
        return Err(Error::Domain(format!(
            "need 0 < ell < k, got ell = {ell}, k = {k}"
        )));
    }
    let initial_moment_k =
        weighted_norm(f0, NormKind::L1Poly(k), &WeightSpec::Polynomial { k })?.value;
    if !initial_moment_k.is_finite() {
        return Err(Error::Domain(
            "initial datum has no finite moment of order k".into(),
        ));
    }
    let horizon = (window.1 / record_every).ceil() * record_every;
    let weight = WeightSpec::Polynomial { k: ell };
    let mut times = Vec::new();
    let mut series = Vec::new();
    evolve_with(gen_b1, f0, horizon, record_every, policy, |t, f, _| {
        times.push(t);
        series.push(weighted_norm(f, NormKind::L1, &weight)?.value);
        Ok(())
    })?;
    let fit = fit_decay(&times, &series, window, FitMode::Polynomial)?;
    let threshold = -(k - ell) + 0.3;
    Ok(PolyDecayReport {
        k,
        ell,
        initial_moment_k,
        times,
        series,
        fit,
        threshold,
        verdict: Verdict::from_bool(fit.slope <= threshold),
    })
}
