//! Pipelines binding a scenario to the solver, particle and probe layers.

use std::io;
use std::path::Path;
use std::sync::Arc;

use runtumble::analysis::{
    agreement_bound, averaging_probe, b0_contraction_probe, b1_dissipation_probe,
    b1_poly_decay_probe, dispersion_probe, fit_decay, lyapunov_monitor, spectral_gap, steady_state,
    two_velocity_exact, AveragingOptions, DispersionOptions, FitMode, KrylovOptions, SteadyMethod,
    SteadyOptions, SteadyState, Verdict,
};
use runtumble::model::{drift_certificate, model_constants, DriftProbe, GridSpec};
use runtumble::particles::{spatial_histogram, write_binary, ParticleEnsemble};
use runtumble::semigroup::{evolve, OperatorTag};
use runtumble::{DistributionField, PhaseGrid};
use serde_json::{json, Value};

use crate::config::{
    law_density, Check, ConfigError, FitModeName, Pipeline, Scenario, SteadyMethodName,
};
use crate::output::Sink;

/// Relative mass drift allowed on top of the recorded boundary leak.
pub const MASS_TOLERANCE: f64 = 1e-10;
/// Largest relative boundary leak accepted by the mass check.
pub const LEAK_TOLERANCE: f64 = 1e-10;
/// Two-velocity steady state: L1 error bound at the configured resolution.
pub const STEADY_ERROR_BOUND: f64 = 5e-3;
/// Two-velocity steady state: accepted band for `error(n_x) / error(2 n_x)`.
pub const STEADY_HALVING_BAND: (f64, f64) = (1.6, 2.4);

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] runtumble::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Mismatch(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn announce(probe: &str, verdict: Verdict, detail: &str) {
    let tag = if verdict.passed() { "PASS" } else { "FAIL" };
    println!("{probe}: {tag} {detail}");
}

pub fn execute(s: &Scenario, pipeline: Pipeline, sink: &mut Sink) -> Result<()> {
    match pipeline {
        Pipeline::Simulate => simulate(s, sink),
        Pipeline::Steady => steady(s, sink),
        Pipeline::Spectrum => spectrum(s, sink),
        Pipeline::DriftCheck => drift_check(s, sink),
        Pipeline::Disperse => disperse(s, sink),
        Pipeline::AverageProbe => average_probe(s, sink),
        Pipeline::Particles => particles(s, sink),
        Pipeline::FitDecay => fit(s, sink),
    }
}

fn model_parameters(s: &Scenario) -> Value {
    json!({ "model": to_json(&s.model), "kernel": to_json(&s.kernel), "weight": to_json(&s.weight), "run": to_json(&s.run) })
}

fn interior_min(f: &DistributionField) -> f64 {
    let grid = f.grid();
    let n = grid.n_x();
    let n_v = grid.n_v();
    let inside = |i: usize| i > 0 && i + 1 < n;
    (0..grid.n_cells())
        .filter(|&c| {
            let idx = grid.cell_indices(c);
            (0..grid.dim()).all(|a| inside(idx[a]))
        })
        .flat_map(|c| f.values()[c * n_v..(c + 1) * n_v].iter().copied())
        .fold(f64::INFINITY, f64::min)
}

fn simulate(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let r = &s.run;
    let grid = s.grid()?;
    let gen = s.generator(r.tag, r.scheme)?;
    let fields = s.initial_fields(&grid)?;
    let policy = s.policy();
    let gamma = s.weight.gamma;
    match r.check {
        Check::Lyapunov => {
            let (_, _, cert) = certificate(s)?;
            let mut per_shape = Vec::new();
            let mut verdict = Verdict::Pass;
            for (k, f) in fields.iter().enumerate() {
                let rep = lyapunov_monitor(&gen, f, &cert, r.horizon, r.record_every, policy)?;
                sink.series(&format!("lyapunov_{k}.csv"), &rep.times, &rep.w)?;
                announce(
                    &format!("lyapunov[{k}]"),
                    rep.verdict,
                    &format!("max W/bound = {:.6}", rep.max_ratio),
                );
                verdict = verdict.and(rep.verdict);
                per_shape.push(json!({
                    "bound": rep.bound,
                    "max_ratio": rep.max_ratio,
                    "beta": rep.beta,
                    "verdict": rep.verdict,
                }));
            }
            sink.report(
                "lyapunov",
                json!({ "scenario": model_parameters(s), "moment_constant": cert.moment_constant(), "alpha": cert.alpha }),
                Value::Array(per_shape),
                Some(verdict),
            )?;
        }
        Check::B1Dissipation => {
            let mut per_shape = Vec::new();
            let mut verdict = Verdict::Pass;
            for (k, f) in fields.iter().enumerate() {
                let rep = b1_dissipation_probe(&gen, f, gamma, r.horizon, r.record_every, policy)?;
                sink.series(&format!("b1_dissipation_{k}.csv"), &rep.times, &rep.series)?;
                announce(
                    &format!("b1_dissipation[{k}]"),
                    rep.verdict,
                    &format!(
                        "increases = {}, slope = {:.6}, r2 = {:.6}",
                        rep.increases, rep.fit.slope, rep.fit.r_squared
                    ),
                );
                verdict = verdict.and(rep.verdict);
                per_shape.push(json!({
                    "increases": rep.increases,
                    "fit": to_json(&rep.fit),
                    "beta": rep.beta,
                    "verdict": rep.verdict,
                }));
            }
            sink.report(
                "b1_dissipation",
                model_parameters(s),
                Value::Array(per_shape),
                Some(verdict),
            )?;
        }
        Check::PolyDecay => {
            let mut per_shape = Vec::new();
            let mut verdict = Verdict::Pass;
            for (k, f) in fields.iter().enumerate() {
                let rep = b1_poly_decay_probe(
                    &gen,
                    r.k,
                    r.ell,
                    f,
                    (r.window[0], r.window[1]),
                    r.record_every,
                    policy,
                )?;
                sink.series(&format!("poly_decay_{k}.csv"), &rep.times, &rep.series)?;
                announce(
                    &format!("poly_decay[{k}]"),
                    rep.verdict,
                    &format!(
                        "exponent = {:.6} (threshold {:.3})",
                        rep.fit.slope, rep.threshold
                    ),
                );
                verdict = verdict.and(rep.verdict);
                per_shape.push(json!({
                    "initial_moment_k": rep.initial_moment_k,
                    "fit": to_json(&rep.fit),
                    "threshold": rep.threshold,
                    "verdict": rep.verdict,
                }));
            }
            sink.report(
                "poly_decay",
                model_parameters(s),
                Value::Array(per_shape),
                Some(verdict),
            )?;
        }
        Check::Mass | Check::Positivity | Check::None => {
            let mut per_shape = Vec::new();
            let mut verdict = Verdict::Pass;
            for (k, f) in fields.iter().enumerate() {
                let trace = evolve(&gen, f, r.horizon, r.record_every, policy, &[])?;
                sink.series(&format!("simulate_{k}_mass.csv"), &trace.times, &trace.mass)?;
                sink.series(&format!("simulate_{k}_leak.csv"), &trace.times, &trace.leak)?;
                sink.series(
                    &format!("simulate_{k}_min.csv"),
                    &trace.times,
                    &trace.min_value,
                )?;
                let m0 = trace.mass[0];
                let mut values = json!({
                    "initial_mass": m0,
                    "final_mass": trace.mass.last(),
                    "leak": trace.stats.leak,
                    "steps": trace.stats.steps,
                    "dt": trace.stats.dt,
                    "global_min": trace.stats.global_min,
                    "negative_steps": trace.stats.negative_steps,
                });
                match r.check {
                    Check::Mass => {
                        let excess = trace
                            .mass
                            .iter()
                            .zip(&trace.leak)
                            .map(|(m, l)| (m - m0).abs() / m0.abs() - l / m0.abs())
                            .fold(f64::NEG_INFINITY, f64::max);
                        let drift = (trace.mass.last().unwrap() - m0).abs() / m0.abs();
                        let leak = trace.stats.leak / m0.abs();
                        let v =
                            Verdict::from_bool(excess <= MASS_TOLERANCE && leak < LEAK_TOLERANCE);
                        announce(
                            &format!("mass[{k}]"),
                            v,
                            &format!("drift = {drift:.3e}, leak = {leak:.3e}"),
                        );
                        values["relative_drift"] = json!(drift);
                        values["relative_leak"] = json!(leak);
                        values["max_drift_minus_leak"] = json!(excess);
                        values["verdict"] = json!(v);
                        verdict = verdict.and(v);
                    }
                    Check::Positivity => {
                        let interior = interior_min(&trace.final_field);
                        let v =
                            Verdict::from_bool(interior > 0.0 && trace.stats.negative_steps == 0);
                        announce(
                            &format!("positivity[{k}]"),
                            v,
                            &format!(
                                "interior min at T = {interior:.3e}, negative steps = {}",
                                trace.stats.negative_steps
                            ),
                        );
                        values["interior_min"] = json!(interior);
                        values["verdict"] = json!(v);
                        verdict = verdict.and(v);
                    }
                    _ => {}
                }
                per_shape.push(values);
            }
            let probe = match r.check {
                Check::Mass => Some("mass"),
                Check::Positivity => Some("positivity"),
                _ => None,
            };
            sink.report(
                probe.unwrap_or("simulate"),
                model_parameters(s),
                Value::Array(per_shape),
                probe.map(|_| verdict),
            )?;
        }
    }
    Ok(())
}

fn steady_options(
    s: &Scenario,
    grid: &Arc<PhaseGrid>,
    method: SteadyMethod,
) -> Result<SteadyOptions> {
    let initial = s.initial[0].build(grid, s.model.chi)?;
    Ok(SteadyOptions {
        method,
        tol: s.steady.tol,
        max_iter: s.steady.max_iter,
        policy: s.policy(),
        initial: Some(initial),
        ..SteadyOptions::default()
    })
}

fn method_of(name: SteadyMethodName) -> SteadyMethod {
    match name {
        SteadyMethodName::LongTime => SteadyMethod::LongTime,
        SteadyMethodName::PowerIteration => SteadyMethod::PowerIteration,
    }
}

fn solve_steady(
    s: &Scenario,
    n_x: usize,
    method: SteadyMethod,
) -> Result<(Arc<PhaseGrid>, SteadyState)> {
    let mut scaled = s.clone();
    scaled.model.n_x = n_x;
    let grid = scaled.grid()?;
    let gen = scaled.generator(OperatorTag::L, s.run.scheme)?;
    let opts = steady_options(&scaled, &grid, method)?;
    Ok((grid, steady_state(&gen, &opts)?))
}

fn steady_summary(st: &SteadyState) -> Value {
    json!({
        "residual": st.residual,
        "eigenvalue": st.eigenvalue,
        "iterations": st.iterations,
        "symmetry_defect": st.symmetry_defect,
        "residual_decay_rate": st.residual_decay_rate(),
        "mass": st.field.mass(),
    })
}

/// Averages pairs of fine cells onto the coarse grid (dimension 1).
fn restrict(fine: &DistributionField, coarse: &Arc<PhaseGrid>) -> Result<DistributionField> {
    let n_v = coarse.n_v();
    let fv = fine.values();
    let vals = (0..coarse.len())
        .map(|idx| {
            let (c, j) = (idx / n_v, idx % n_v);
            0.5 * (fv[2 * c * n_v + j] + fv[(2 * c + 1) * n_v + j])
        })
        .collect();
    Ok(DistributionField::from_values(coarse.clone(), vals)?)
}

fn write_profile(sink: &mut Sink, name: &str, f: &DistributionField) -> io::Result<()> {
    let grid = f.grid();
    let rho = f.density();
    if grid.dim() == 1 {
        sink.csv(name, ("x", "value"), grid.axis(), &rho)
    } else {
        let cells: Vec<f64> = (0..grid.n_cells()).map(|c| c as f64).collect();
        sink.csv(name, ("cell", "value"), &cells, &rho)
    }
}

fn steady(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let chi = s.model.chi;
    let method = method_of(s.steady.method);
    let (grid, st) = solve_steady(s, s.model.n_x, method)?;
    write_profile(sink, "steady_density.csv", &st.field)?;
    let hist_t: Vec<f64> = (0..st.history.len())
        .map(|k| k as f64 * st.history_dt)
        .collect();
    sink.series("steady_residual.csv", &hist_t, &st.history)?;
    let mut values = json!({ "coarse": steady_summary(&st) });
    let mut verdict = Verdict::from_bool(st.residual <= s.steady.tol);
    let exact = two_velocity_exact(&grid, chi).ok();
    let mut detail = format!("residual = {:.3e}", st.residual);
    if let Some(exact) = &exact {
        let err = st.field.l1_distance(exact)?;
        values["error"] = json!(err);
        verdict = verdict.and(Verdict::from_bool(err <= STEADY_ERROR_BOUND));
        detail = format!("{detail}, L1 error = {err:.4e}");
    }
    if s.steady.refine {
        let (fine_grid, fine) = solve_steady(s, 2 * s.model.n_x, method)?;
        write_profile(sink, "steady_density_refined.csv", &fine.field)?;
        values["refined"] = steady_summary(&fine);
        if let Some(exact) = &exact {
            let err = st.field.l1_distance(exact)?;
            let err_fine = fine
                .field
                .l1_distance(&two_velocity_exact(&fine_grid, chi)?)?;
            let ratio = err / err_fine;
            values["error_refined"] = json!(err_fine);
            values["error_ratio"] = json!(ratio);
            let ok = ratio >= STEADY_HALVING_BAND.0 && ratio <= STEADY_HALVING_BAND.1;
            verdict = verdict.and(Verdict::from_bool(ok));
            detail = format!("{detail}, refined error = {err_fine:.4e}, ratio = {ratio:.4}");
        } else if grid.dim() == 1 {
            let distance = restrict(&fine.field, &grid)?.l1_distance(&st.field)?;
            values["refinement_distance"] = json!(distance);
            detail = format!("{detail}, refinement distance = {distance:.4e}");
        }
    }
    if s.steady.cross_check {
        let other = match method {
            SteadyMethod::LongTime => SteadyMethod::PowerIteration,
            SteadyMethod::PowerIteration => SteadyMethod::LongTime,
        };
        let (_, alt) = solve_steady(s, s.model.n_x, other)?;
        let distance = alt.field.l1_distance(&st.field)?;
        let gap = st.residual_decay_rate().or(alt.residual_decay_rate());
        let bound = gap.map(|g| agreement_bound(s.steady.tol, g));
        let ok = bound.is_some_and(|b| distance <= b);
        values["cross_check"] = json!({
            "method": to_json(&other),
            "summary": steady_summary(&alt),
            "distance": distance,
            "bound": bound,
            "verdict": Verdict::from_bool(ok),
        });
        verdict = verdict.and(Verdict::from_bool(ok));
        detail = format!("{detail}, cross-check distance = {distance:.3e}");
    }
    announce("steady", verdict, &detail);
    sink.report(
        "steady",
        json!({ "scenario": model_parameters(s), "steady": to_json(&s.steady) }),
        values,
        Some(verdict),
    )?;
    Ok(())
}

fn spectrum(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let sp = &s.spectrum;
    let grid = s.grid()?;
    let gen = s.generator(OperatorTag::L, s.run.scheme)?;
    let opts = SteadyOptions {
        tol: sp.steady_tol,
        ..steady_options(s, &grid, method_of(s.steady.method))?
    };
    let st = steady_state(&gen, &opts)?;
    let probes = s.initial_fields(&grid)?;
    let kopts = KrylovOptions {
        dim: sp.krylov_dim,
        sigma: sp.sigma,
        max_restarts: sp.max_restarts,
        ..KrylovOptions::default()
    };
    let gap = spectral_gap(
        &gen,
        &st.field,
        &probes,
        sp.horizon,
        sp.record_every,
        s.policy(),
        Some(&kopts),
    )?;
    for (k, series) in gap.series.iter().enumerate() {
        sink.series(&format!("spectrum_probe_{k}.csv"), &gap.times, series)?;
    }
    let lambda2 = gap
        .krylov
        .as_ref()
        .filter(|k| k.eigenvalues.len() >= 2)
        .map(|k| k.eigenvalues[1].0);
    let deviations: Vec<Option<f64>> = gap
        .fits
        .iter()
        .map(|f| lambda2.map(|l| (f.slope - l).abs() / l.abs()))
        .collect();
    let fits_ok = gap
        .fits
        .iter()
        .all(|f| f.slope < 0.0 && f.r_squared >= sp.min_r_squared);
    let agree_ok = deviations
        .iter()
        .all(|d| d.is_some_and(|d| d <= sp.agreement));
    let krylov_ok = gap.krylov.as_ref().is_some_and(|k| k.converged);
    let verdict =
        Verdict::from_bool(fits_ok && agree_ok && krylov_ok && gap.spread <= sp.max_spread);
    announce(
        "spectrum",
        verdict,
        &format!(
            "lambda2 = {}, worst slope = {:.6}, spread = {:.4}, max deviation = {}",
            lambda2.map_or("n/a".into(), |l| format!("{l:.6}")),
            gap.worst_slope,
            gap.spread,
            deviations
                .iter()
                .flatten()
                .copied()
                .fold(None, |a: Option<f64>, d| Some(a.map_or(d, |a| a.max(d))))
                .map_or("n/a".into(), |d| format!("{d:.4}")),
        ),
    );
    sink.report(
        "spectrum",
        json!({ "scenario": model_parameters(s), "spectrum": to_json(sp), "krylov": to_json(&kopts) }),
        json!({
            "steady": steady_summary(&st),
            "fits": to_json(&gap.fits),
            "worst_slope": gap.worst_slope,
            "spread": gap.spread,
            "flagged": gap.flagged,
            "projected_mass": gap.projected_mass,
            "krylov": to_json(&gap.krylov),
            "lambda2": lambda2,
            "relative_deviation": deviations,
        }),
        Some(verdict),
    )?;
    Ok(())
}

fn certificate(
    s: &Scenario,
) -> Result<(
    runtumble::ModelConstants,
    DriftProbe,
    runtumble::model::DriftCertificate,
)> {
    let d = &s.drift;
    let consts = model_constants(s.model.chi, s.model.dim)?;
    let probe = DriftProbe::log_spaced(s.model.dim, d.n_radii, d.r_min, d.r_max, d.n_v)?;
    let cert = drift_certificate(&consts, s.weight.gamma, &probe)?;
    Ok((consts, probe, cert))
}

fn drift_check(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let (consts, probe, cert) = certificate(s)?;
    let violations = cert.violations(&consts, &probe);
    let refined = cert.violations(&consts, &probe.refined());
    let verdict = Verdict::from_bool(cert.alpha > 0.0 && violations == 0);
    println!("beta = {}", cert.beta);
    println!("alpha = {}", cert.alpha);
    println!("A = {}", cert.a_sup);
    announce(
        "drift",
        verdict,
        &format!("violations = {violations} on {} nodes", probe.len()),
    );
    sink.report(
        "drift",
        json!({ "chi": s.model.chi, "gamma": s.weight.gamma, "dim": s.model.dim, "probe": to_json(&s.drift) }),
        json!({
            "certificate": to_json(&cert),
            "moment_constant": cert.moment_constant(),
            "violations": violations,
            "refined_violations": refined,
            "gamma_star": consts.gamma_star,
        }),
        Some(verdict),
    )?;
    Ok(())
}

fn disperse(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let d = &s.disperse;
    let mut verdict = Verdict::Pass;
    let mut contraction = Vec::new();
    if d.contraction {
        let grid = s.grid()?;
        let steps = (s.run.horizon / s.run.record_every).round() as usize;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * s.run.record_every).collect();
        for (k, f) in s.initial_fields(&grid)?.iter().enumerate() {
            let rep = b0_contraction_probe(f, s.model.chi, s.weight.gamma, &times)?;
            sink.series(
                &format!("contraction_{k}_l1.csv"),
                &rep.times,
                &rep.excess_l1,
            )?;
            sink.series(
                &format!("contraction_{k}_linf.csv"),
                &rep.times,
                &rep.excess_linf,
            )?;
            announce(
                &format!("contraction[{k}]"),
                rep.verdict,
                &format!("max excess = {:.3e}", rep.max_excess),
            );
            verdict = verdict.and(rep.verdict);
            contraction.push(json!({
                "rate": rep.rate,
                "max_excess": rep.max_excess,
                "tolerance": rep.tolerance,
                "verdict": rep.verdict,
            }));
        }
    }
    let grid = Arc::new(PhaseGrid::new(GridSpec {
        n_v: d.n_v,
        ..s.grid_spec()
    })?);
    let opts = DispersionOptions {
        chi: s.model.chi,
        gamma: d.gamma,
        blob_centres: d.blob_centres.clone(),
        sigma: d.sigma,
        t_min: d.t_min,
        t_max: d.t_max,
        n_times: d.n_times,
        nested_widths: d.nested_widths.clone(),
    };
    let rep = dispersion_probe(&grid, &opts)?;
    for (b, q) in rep.q.iter().enumerate() {
        sink.series(&format!("dispersion_q_{b}.csv"), &rep.times, q)?;
    }
    announce(
        "dispersion",
        rep.verdict,
        &format!("ratio = {:.4}, max Q = {:.4}", rep.ratio, rep.max_q),
    );
    verdict = verdict.and(rep.verdict);
    sink.report(
        "disperse",
        json!({ "scenario": model_parameters(s), "dispersion": to_json(&opts), "n_v": d.n_v }),
        json!({
            "contraction": contraction,
            "dispersion": {
                "a_star": rep.a_star,
                "max_per_blob": rep.max_per_blob,
                "max_q": rep.max_q,
                "ratio": rep.ratio,
                "nested": rep.nested,
                "verdict": rep.verdict,
            },
        }),
        Some(verdict),
    )?;
    Ok(())
}

/// Rough family: velocity-independent white noise and phase-space white noise, alternating.
pub fn rough_family(grid: &Arc<PhaseGrid>, members: usize, seed: u64) -> Vec<DistributionField> {
    let n_v = grid.n_v();
    (0..members)
        .map(|k| {
            let noise = DistributionField::noise(grid.clone(), seed.wrapping_add(k as u64));
            if k % 2 == 0 {
                let vals = (0..grid.len())
                    .map(|i| noise.values()[(i / n_v) * n_v])
                    .collect();
                DistributionField::from_values(grid.clone(), vals).expect("grid length")
            } else {
                noise
            }
        })
        .collect()
}

fn average_probe(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let a = &s.average;
    let opts = AveragingOptions {
        t_max: a.t_max,
        t_geometric_min: a.t_geometric_min,
        n_geometric: a.n_geometric,
        dt_uniform: a.dt_uniform,
    };
    let rep = averaging_probe(
        &s.grid_spec(),
        |g| rough_family(g, a.members, s.seed),
        &opts,
    )?;
    announce(
        "averaging",
        rep.verdict,
        &format!(
            "max J = {:.6} / {:.6} (ratio {:.4})",
            rep.max_j_coarse, rep.max_j_fine, rep.refinement_ratio
        ),
    );
    let members: Vec<f64> = (0..rep.j_coarse.len()).map(|k| k as f64).collect();
    sink.csv(
        "averaging_j_coarse.csv",
        ("member", "value"),
        &members,
        &rep.j_coarse,
    )?;
    sink.csv(
        "averaging_j_fine.csv",
        ("member", "value"),
        &members,
        &rep.j_fine,
    )?;
    sink.report(
        "averaging",
        json!({ "grid": to_json(&s.grid_spec()), "options": to_json(&opts), "members": a.members, "seed": s.seed }),
        to_json(&rep),
        Some(rep.verdict),
    )?;
    Ok(())
}

fn particles(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let p = &s.particles;
    let grid = s.grid()?;
    let mut ensemble = ParticleEnsemble::sample(p.n, s.model.dim, s.seed, &p.law)?;
    let kernel = s.kernel(grid.speed())?;
    let step = ensemble.step(p.horizon, &kernel)?;
    let hist = spatial_histogram(&ensemble, &grid)?;
    let (moment, moment_err) = ensemble.exp_moment(s.weight.gamma);
    let xs: Vec<f64> = if grid.dim() == 1 {
        grid.axis().to_vec()
    } else {
        (0..grid.n_cells()).map(|c| c as f64).collect()
    };
    let column = if grid.dim() == 1 { "x" } else { "cell" };
    sink.csv(
        "particles_density.csv",
        (column, "value"),
        &xs,
        &hist.density,
    )?;
    if p.export {
        let name = format!("particles_{}.bin", &sink.hash()[..16]);
        sink.raw(&name, |w| write_binary(&ensemble, w))?;
    }
    let mut values = json!({
        "candidates": step.candidates,
        "jumps": step.jumps,
        "overflow": hist.overflow,
        "exp_moment": moment,
        "exp_moment_stderr": moment_err,
    });
    let mut verdict = None;
    if p.compare {
        let f0 = law_density(&p.law, &grid)?;
        let gen = s.generator(OperatorTag::L, p.compare_scheme)?;
        let trace = evolve(&gen, &f0, p.horizon, p.horizon, s.policy(), &[])?;
        let rho = trace.final_field.density();
        sink.csv("pde_density.csv", (column, "value"), &xs, &rho)?;
        let distance = hist.l1_distance(&grid, &rho)?;
        let v = Verdict::from_bool(distance <= p.threshold);
        announce(
            "particles",
            v,
            &format!("L1 distance = {distance:.5} (threshold {})", p.threshold),
        );
        values["l1_distance"] = json!(distance);
        values["pde_mass"] = json!(trace.final_field.mass());
        verdict = Some(v);
    } else {
        println!(
            "particles: {} jumps, overflow {:.3e}",
            step.jumps, hist.overflow
        );
    }
    sink.report(
        "particles",
        json!({ "model": to_json(&s.model), "particles": to_json(p), "seed": s.seed }),
        values,
        verdict,
    )?;
    Ok(())
}

/// Reads a `t,value` CSV, skipping `#` comment lines and the header row.
pub fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut header = true;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header {
            header = false;
            continue;
        }
        let parse = |s: Option<&str>| s.and_then(|s| s.trim().parse::<f64>().ok());
        let mut cols = line.split(',');
        match (parse(cols.next()), parse(cols.next())) {
            (Some(t), Some(v)) => {
                times.push(t);
                values.push(v);
            }
            _ => {
                return Err(CliError::Config(format!(
                    "{}:{}: expected two numeric columns",
                    path.display(),
                    n + 1
                )));
            }
        }
    }
    Ok((times, values))
}

fn fit(s: &Scenario, sink: &mut Sink) -> Result<()> {
    let f = &s.fit;
    let input = f
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("fit.input is required".into()))?;
    let (times, values) = read_series(input)?;
    let mode = match f.mode {
        FitModeName::Exponential => FitMode::Exponential,
        FitModeName::Polynomial => FitMode::Polynomial,
    };
    let rf = fit_decay(&times, &values, (f.window[0], f.window[1]), mode)?;
    let verdict = Verdict::from_bool(rf.r_squared >= f.min_r_squared);
    announce(
        "fit",
        verdict,
        &format!("slope = {:.6}, r2 = {:.6}", rf.slope, rf.r_squared),
    );
    sink.report("fit", to_json(f), to_json(&rf), Some(verdict))?;
    Ok(())
}
