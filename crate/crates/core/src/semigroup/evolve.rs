use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::generator::Generator;
use crate::error::{Error, Result};
use crate::field::DistributionField;

/// Time step selection `dt = cfl * min(dx / v0, 1 / (1 + chi))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtPolicy {
    pub cfl: f64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self { cfl: 0.4 }
    }
}

impl DtPolicy {
    /// Step requested by the policy; fails if it exceeds the positivity limit of `gen`.
    pub fn dt(&self, gen: &Generator) -> Result<f64> {
        if !(self.cfl > 0.0) {
            return Err(Error::Config(format!(
                "cfl must be positive, got {}",
                self.cfl
            )));
        }
        let grid = gen.grid();
        let chi = gen.kernel().chi;
        let dt = self.cfl * (grid.dx() / grid.speed()).min(1.0 / (1.0 + chi));
        let limit = gen.max_positive_dt();
        if dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
        Ok(dt)
    }
}

/// Named scalar functional recorded along an evolution.
pub struct Functional<'a> {
    pub name: String,
    pub eval: Box<dyn Fn(&DistributionField) -> f64 + 'a>,
}

impl<'a> Functional<'a> {
    pub fn new(name: impl Into<String>, eval: impl Fn(&DistributionField) -> f64 + 'a) -> Self {
        Self {
            name: name.into(),
            eval: Box::new(eval),
        }
    }
}

/// Per-step bookkeeping shared by all observers.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StepStats {
    pub steps: usize,
    pub dt: f64,
    /// Mass that left through the boundary so far.
    pub leak: f64,
    /// Smallest nodal value over all steps.
    pub global_min: f64,
    /// Number of steps whose field had a negative entry.
    pub negative_steps: usize,
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    /// Cumulative boundary leak at each recorded time.
    pub leak: Vec<f64>,
    pub min_value: Vec<f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub stats: StepStats,
    pub final_field: DistributionField,
}

impl EvolutionTrace {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.get(name).map(Vec::as_slice)
    }
}

fn ssp_rk3_step(
    gen: &Generator,
    u: &mut [f64],
    dt: f64,
    k: &mut [f64],
    u1: &mut [f64],
    u2: &mut [f64],
) -> f64 {
    let f0 = gen.apply(u, k);
    for i in 0..u.len() {
        u1[i] = u[i] + dt * k[i];
    }
    let f1 = gen.apply(u1, k);
    for i in 0..u.len() {
        u2[i] = 0.75 * u[i] + 0.25 * (u1[i] + dt * k[i]);
    }
    let f2 = gen.apply(u2, k);
    for i in 0..u.len() {
        u[i] = u[i] / 3.0 + 2.0 / 3.0 * (u2[i] + dt * k[i]);
    }
    dt * (f0 / 6.0 + f1 / 6.0 + 2.0 * f2 / 3.0)
}

/// Integrates `d f/dt = G f` with SSP-RK3 on `[0, horizon]`, calling `observe` at
/// `t = 0` and every `record_every` time units. The step is the largest divisor of
/// `record_every` not above the policy step.
pub fn evolve_with(
    gen: &Generator,
    f0: &DistributionField,
    horizon: f64,
    record_every: f64,
    policy: DtPolicy,
    mut observe: impl FnMut(f64, &DistributionField, &StepStats) -> Result<()>,
) -> Result<(DistributionField, StepStats)> {
    if !gen.grid().same_shape(f0.grid()) {
        return Err(Error::Mismatch(
            "initial field and generator use different grids".into(),
        ));
    }
    if !(horizon >= 0.0 && record_every > 0.0) {
        return Err(Error::Config(format!(
            "need horizon >= 0 and record_every > 0, got {horizon}, {record_every}"
        )));
    }
    let records = (horizon / record_every).round();
    if (records * record_every - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Config(format!(
            "horizon {horizon} is not a multiple of the record interval {record_every}"
        )));
    }
    let records = records as usize;
    let dt_max = policy.dt(gen)?;
    let substeps = (record_every / dt_max - 1e-12).ceil().max(1.0) as usize;
    let dt = record_every / substeps as f64;

    let mut field = f0.clone();
    let n = field.values().len();
    let (mut k, mut u1, mut u2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stats = StepStats {
        steps: 0,
        dt,
        leak: 0.0,
        global_min: field.min(),
        negative_steps: 0,
    };
    if stats.global_min < 0.0 {
        stats.negative_steps += 1;
    }
    observe(0.0, &field, &stats)?;
    for r in 1..=records {
        for _ in 0..substeps {
            stats.leak += ssp_rk3_step(gen, field.values_mut(), dt, &mut k, &mut u1, &mut u2);
            stats.steps += 1;
            let m = field.min();
            if m.is_nan() || !field.is_finite() {
                return Err(Error::NonFinite {
                    step: stats.steps,
                    time: stats.steps as f64 * dt,
                });
            }
            if m < 0.0 {
                stats.negative_steps += 1;
            }
            stats.global_min = stats.global_min.min(m);
        }
        observe(r as f64 * record_every, &field, &stats)?;
    }
    Ok((field, stats))
}

/// [`evolve_with`] recording mass, leak, minimum and the given functionals.
pub fn evolve(
    gen: &Generator,
    f0: &DistributionField,
    horizon: f64,
    record_every: f64,
    policy: DtPolicy,
    functionals: &[Functional<'_>],
) -> Result<EvolutionTrace> {
    let mut times = Vec::new();
    let mut mass = Vec::new();
    let mut leak = Vec::new();
    let mut min_value = Vec::new();
    let mut series: BTreeMap<String, Vec<f64>> = functionals
        .iter()
        .map(|f| (f.name.clone(), Vec::new()))
        .collect();
    let (final_field, stats) = evolve_with(gen, f0, horizon, record_every, policy, |t, f, s| {
        times.push(t);
        mass.push(f.mass());
        leak.push(s.leak);
        min_value.push(f.min());
        for func in functionals {
            series
                .get_mut(&func.name)
                .expect("registered")
                .push((func.eval)(f));
        }
        Ok(())
    })?;
    Ok(EvolutionTrace {
        times,
        mass,
        leak,
        min_value,
        series,
        stats,
        final_field,
    })
}
