use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `log value` against `t`.
    Exponential,
    /// `log value` against `log <t>`.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub mode: FitMode,
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

const MIN_SAMPLES: usize = 10;

fn abscissa(mode: FitMode, t: f64) -> f64 {
    match mode {
        FitMode::Exponential => t,
        FitMode::Polynomial => 0.5 * (1.0 + t * t).ln(),
    }
}

/// Least-squares fit of `log value` on the samples with `t` in `window` (inclusive).
pub fn fit_decay(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    mode: FitMode,
) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::Fit(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    let (t1, t2) = window;
    if !(t1 < t2) {
        return Err(Error::Fit(format!("empty window [{t1}, {t2}]")));
    }
    let tol = 1e-9 * t2.abs().max(1.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < t1 - tol || t > t2 + tol {
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Fit(format!("nonpositive value {v} at t = {t}")));
        }
        xs.push(abscissa(mode, t));
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "window [{t1}, {t2}] holds {n} samples, need at least {MIN_SAMPLES}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        mode,
        window,
        slope,
        intercept,
        r_squared,
        samples: n,
    })
}

/// Fits on `[t1, t_end]` for every sample time `t1` in `left`, keeping the best r².
pub fn fit_decay_auto(
    times: &[f64],
    values: &[f64],
    left: (f64, f64),
    t_end: f64,
    mode: FitMode,
) -> Result<RateFit> {
    let mut best: Option<RateFit> = None;
    let mut last_err = None;
    for &t1 in times.iter().filter(|&&t| t >= left.0 && t <= left.1) {
        match fit_decay(times, values, (t1, t_end), mode) {
            Ok(fit) => {
                if best.is_none_or(|b| fit.r_squared > b.r_squared) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err
            .unwrap_or_else(|| Error::Fit(format!("no sample time in [{}, {}]", left.0, left.1)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = t.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        let fit = fit_decay(&t, &v, (0.0, 24.5), FitMode::Exponential).unwrap();
        assert!((fit.slope + 0.3).abs() < 1e-12);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_power_law() {
        let t: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| (1.0 + t * t).powf(-0.75)).collect();
        let fit = fit_decay(&t, &v, (1.0, 39.0), FitMode::Polynomial).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        let t: Vec<f64> = (0..20).map(f64::from).collect();
        let mut v = vec![1.0; 20];
        assert!(fit_decay(&t, &v, (0.0, 5.0), FitMode::Exponential).is_err());
        v[3] = 0.0;
        assert!(fit_decay(&t, &v, (0.0, 19.0), FitMode::Exponential).is_err());
        assert!(fit_decay(&t, &v, (5.0, 5.0), FitMode::Exponential).is_err());
    }

    #[test]
    fn auto_window_skips_transient() {
        let t: Vec<f64> = (0..100).map(f64::from).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|t| (-0.1 * t).exp() + 5.0 * (-t).exp())
            .collect();
        let fit = fit_decay_auto(&t, &v, (0.0, 60.0), 99.0, FitMode::Exponential).unwrap();
        assert!((fit.slope + 0.1).abs() < 1e-8);
        assert!(fit.window.0 > 10.0);
    }

    proptest! {
        #[test]
        fn recovers_rate(a in -2.0f64..-0.01, c in 0.1f64..10.0, poly in any::<bool>()) {
            let mode = if poly { FitMode::Polynomial } else { FitMode::Exponential };
            let t: Vec<f64> = (0..30).map(|i| 1.0 + i as f64).collect();
            let v: Vec<f64> = t.iter().map(|&t| c * (a * abscissa(mode, t)).exp()).collect();
            let fit = fit_decay(&t, &v, (1.0, 30.0), mode).unwrap();
            prop_assert!((fit.slope - a).abs() < 1e-10);
            prop_assert!(fit.r_squared >= 0.0 && fit.r_squared <= 1.0);
        }
    }
}
