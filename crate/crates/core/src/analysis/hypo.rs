use serde::{Deserialize, Serialize};

use super::fit::{fit_decay, FitMode};
use super::norms::{l1, l2};
use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::WeightSpec;
use crate::semigroup::{evolve_with, DtPolicy, Generator, OperatorTag};

/// `|| f ||_X = || f ||_{L1(m)} + || f ||_{L2(m)}` with `m = exp(gamma <x>)`.
pub fn x_norm(f: &DistributionField, gamma: f64) -> f64 {
    let w = WeightSpec::Exponential { gamma };
    l1(f, &w) + l2(f, &w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypoOptions {
    pub gamma: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Integration horizon; `20 / |a*|` when absent.
    pub t_max: Option<f64>,
    pub record_every: f64,
    pub policy: DtPolicy,
}

impl Default for HypoOptions {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            eta1: 0.01,
            eta2: 0.01,
            t_max: None,
            record_every: 0.25,
            policy: DtPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypoNorms {
    pub x_norm: f64,
    pub triple_bar: f64,
    pub n: f64,
    /// `|| f ||_{L2(mu^{1/2})}`.
    pub l2_mu: f64,
    /// Trapezoid part of `int_0^{t_max} || S_B1(t) f ||_X^2 dt`.
    pub integral: f64,
    /// Analytic bound for the integral beyond `t_max`.
    pub tail: f64,
    /// Exponential rate used for the tail.
    pub tail_rate: f64,
    pub t_max: f64,
}

/// The three norms `|| f ||_X`, `||| f |||` and `N(f)` built on the `B1` semigroup.
pub fn hypo_norms(
    f: &DistributionField,
    gen_b1: &Generator,
    opts: &HypoOptions,
) -> Result<HypoNorms> {
    if gen_b1.tag() != OperatorTag::B1 {
        return Err(Error::Domain(format!(
            "hypocoercive norms need tag B1, got {:?}",
            gen_b1.tag()
        )));
    }
    let grid = gen_b1.grid();
    let a_star = gen_b1.kernel().chi + opts.gamma * grid.speed() - 1.0;
    if !(a_star < 0.0) {
        return Err(Error::Config(format!(
            "a* = {a_star} is not negative for gamma = {}",
            opts.gamma
        )));
    }
    let t_max = opts.t_max.unwrap_or(20.0 / a_star.abs());
    let xf = x_norm(f, opts.gamma);
    let l2_mu = f.weighted_sum(|cell, j, v| {
        let pos = grid.position(cell);
        v * v * WeightSpec::Mu.eval(&pos[..grid.dim()], grid.velocity(j))
    });
    let l2_mu = l2_mu.max(0.0).sqrt();
    if xf == 0.0 {
        return Ok(HypoNorms {
            x_norm: 0.0,
            triple_bar: 0.0,
            n: 0.0,
            l2_mu,
            integral: 0.0,
            tail: 0.0,
            tail_rate: a_star,
            t_max,
        });
    }
    let records = (t_max / opts.record_every).ceil();
    let t_max = records * opts.record_every;
    let mut times = Vec::new();
    let mut series = Vec::new();
    evolve_with(
        gen_b1,
        f,
        t_max,
        opts.record_every,
        opts.policy,
        |t, g, _| {
            times.push(t);
            series.push(x_norm(g, opts.gamma));
            Ok(())
        },
    )?;
    let integral: f64 = times
        .windows(2)
        .zip(series.windows(2))
        .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] * s[0] + s[1] * s[1]))
        .sum();
    let last = *series.last().expect("nonempty trace");
    let tail_rate = if last > 0.0 {
        let fit = fit_decay(
            &times,
            &series,
            (2.0 * t_max / 3.0, t_max),
            FitMode::Exponential,
        )?;
        fit.slope.max(a_star)
    } else {
        a_star
    };
    if tail_rate >= 0.0 {
        return Err(Error::Fit(format!(
            "B1 trace does not decay: fitted rate {tail_rate}"
        )));
    }
    let tail = last * last / (2.0 * tail_rate.abs());
    let triple2 = opts.eta2 * xf * xf + integral + tail;
    let n2 = opts.eta1 * l2_mu * l2_mu + triple2;
    Ok(HypoNorms {
        x_norm: xf,
        triple_bar: triple2.sqrt(),
        n: n2.sqrt(),
        l2_mu,
        integral,
        tail,
        tail_rate,
        t_max,
    })
}
