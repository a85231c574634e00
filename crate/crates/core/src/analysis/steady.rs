use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::model::{PhaseGrid, VelocitySet};
use crate::semigroup::{evolve_with, DtPolicy, Generator, OperatorTag};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    LongTime,
    PowerIteration,
}

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Target for the eigen-residual `|| L G - lambda G ||_{L1}`.
    pub tol: f64,
    /// Iteration cap: solver steps for power iteration, check intervals for long time.
    pub max_iter: usize,
    /// Time between residual checks for the long-time method.
    pub check_every: f64,
    pub policy: DtPolicy,
    /// Starting field; a centred Gaussian when absent.
    pub initial: Option<DistributionField>,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            method: SteadyMethod::PowerIteration,
            tol: 1e-10,
            max_iter: 2_000_000,
            check_every: 1.0,
            policy: DtPolicy::default(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub field: DistributionField,
    pub method: SteadyMethod,
    pub residual: f64,
    /// `mass(L G) / mass(G)`: the boundary outflow rate of `G`.
    pub eigenvalue: f64,
    pub iterations: usize,
    /// Residual after each iteration (power) or check (long time).
    pub history: Vec<f64>,
    /// Time between consecutive history entries.
    pub history_dt: f64,
    /// `|| G - G o S ||_{L1}` for the symmetry `S` of the grid: `(x, v) -> (-x, -v)` in
    /// dimension 1, a quarter turn in dimension 2.
    pub symmetry_defect: f64,
}

impl SteadyState {
    /// Exponential decay rate of the residual history over its last half.
    pub fn residual_decay_rate(&self) -> Option<f64> {
        let h = &self.history;
        if h.len() < 4 {
            return None;
        }
        let a = h.len() / 2;
        let b = h.len() - 1;
        if !(h[a] > 0.0 && h[b] > 0.0) {
            return None;
        }
        Some((h[b] / h[a]).ln() / ((b - a) as f64 * self.history_dt))
    }
}

/// Bound `2 tol / |gap|` on the distance between two steady states converged to `tol`.
pub fn agreement_bound(tol: f64, gap: f64) -> f64 {
    2.0 * tol / gap.abs()
}

fn l1(grid: &PhaseGrid, values: &[f64]) -> f64 {
    let w = grid.v_weights();
    let n_v = grid.n_v();
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() * w[i % n_v])
        .sum::<f64>()
        * grid.cell_volume()
}

fn mass_of(grid: &PhaseGrid, values: &[f64]) -> f64 {
    let w = grid.v_weights();
    let n_v = grid.n_v();
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v * w[i % n_v])
        .sum::<f64>()
        * grid.cell_volume()
}

/// Returns `(residual, lambda)` and leaves `L f` in `lf`.
fn eigen_residual(gen: &Generator, f: &[f64], lf: &mut [f64]) -> (f64, f64) {
    gen.apply(f, lf);
    let grid = gen.grid();
    let lambda = mass_of(grid, lf) / mass_of(grid, f);
    let diff: Vec<f64> = lf.iter().zip(f).map(|(a, b)| a - lambda * b).collect();
    (l1(grid, &diff), lambda)
}

fn symmetry_defect(f: &DistributionField) -> f64 {
    let grid = f.grid();
    let n = grid.n_x();
    let n_v = grid.n_v();
    let vals = f.values();
    let diff: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let (cell, j) = (idx / n_v, idx % n_v);
            let image = match grid.dim() {
                1 => (n - 1 - cell) * n_v + grid.reflected_velocity(j),
                _ => {
                    let [i, k] = grid.cell_indices(cell);
                    grid.cell_of([n - 1 - k, i]) * n_v + grid.rotated_velocity(j)
                }
            };
            vals[idx] - vals[image]
        })
        .collect();
    l1(grid, &diff)
}

fn default_initial(grid: &Arc<PhaseGrid>) -> DistributionField {
    let mut f = DistributionField::from_fn(grid.clone(), |x, _| {
        (-x.iter().map(|a| a * a).sum::<f64>() / 8.0).exp()
    });
    let m = f.mass();
    f.scale(1.0 / m);
    f
}

/// Normalized invariant state of a tag-L generator.
pub fn steady_state(gen: &Generator, opts: &SteadyOptions) -> Result<SteadyState> {
    if gen.tag() != OperatorTag::L {
        return Err(Error::Domain(format!(
            "steady state needs tag L, got {:?}",
            gen.tag()
        )));
    }
    let grid = gen.grid().clone();
    let mut f = match &opts.initial {
        Some(f0) => {
            f0.check_same_grid(&DistributionField::zeros(grid.clone()))?;
            if f0.min() < 0.0 || !(f0.mass() > 0.0) {
                return Err(Error::Domain(
                    "initial guess must be nonnegative with positive mass".into(),
                ));
            }
            let mut f = f0.clone();
            f.scale(1.0 / f0.mass());
            f
        }
        None => default_initial(&grid),
    };
    let n = grid.len();
    let mut lf = vec![0.0; n];
    let mut history = Vec::new();
    let (mut residual, mut lambda) = eigen_residual(gen, f.values(), &mut lf);
    history.push(residual);
    let mut iterations = 0;
    let history_dt;
    match opts.method {
        SteadyMethod::PowerIteration => {
            let tau = opts.policy.dt(gen)?;
            history_dt = tau;
            while residual >= opts.tol {
                if iterations >= opts.max_iter {
                    return Err(Error::NonConvergence {
                        iterations,
                        history: thin(&history),
                    });
                }
                let vals = f.values_mut();
                for (a, b) in vals.iter_mut().zip(&lf) {
                    *a += tau * b;
                }
                let m = mass_of(&grid, vals);
                vals.iter_mut().for_each(|a| *a /= m);
                (residual, lambda) = eigen_residual(gen, f.values(), &mut lf);
                if !residual.is_finite() {
                    return Err(Error::NonFinite {
                        step: iterations,
                        time: iterations as f64 * tau,
                    });
                }
                history.push(residual);
                iterations += 1;
            }
        }
        SteadyMethod::LongTime => {
            history_dt = opts.check_every;
            while residual >= opts.tol {
                if iterations >= opts.max_iter {
                    return Err(Error::NonConvergence {
                        iterations,
                        history: thin(&history),
                    });
                }
                let (next, _) = evolve_with(
                    gen,
                    &f,
                    opts.check_every,
                    opts.check_every,
                    opts.policy,
                    |_, _, _| Ok(()),
                )?;
                f = next;
                let m = f.mass();
                f.scale(1.0 / m);
                (residual, lambda) = eigen_residual(gen, f.values(), &mut lf);
                history.push(residual);
                iterations += 1;
            }
        }
    }
    let symmetry_defect = symmetry_defect(&f);
    Ok(SteadyState {
        field: f,
        method: opts.method,
        residual,
        eigenvalue: lambda,
        iterations,
        history,
        history_dt,
        symmetry_defect,
    })
}

fn thin(history: &[f64]) -> Vec<f64> {
    let stride = (history.len() / 100).max(1);
    history.iter().step_by(stride).copied().collect()
}

/// Mass-1 invariant state of the two-velocity model in the normalized velocity measure:
/// `G(x, +-1) = (chi/2) exp(-chi |x|)`.
pub fn two_velocity_exact(grid: &Arc<PhaseGrid>, chi: f64) -> Result<DistributionField> {
    if grid.velocity_set() != VelocitySet::TwoVelocity || grid.dim() != 1 {
        return Err(Error::Domain(
            "explicit steady state exists for the one-dimensional two-velocity grid only".into(),
        ));
    }
    Ok(DistributionField::from_fn(grid.clone(), |x, _| {
        0.5 * chi * (-chi * x[0].abs()).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridSpec, KernelSpec};
    use crate::semigroup::Scheme;

    fn ball(n_x: usize, n_v: usize) -> Generator {
        let g = Arc::new(PhaseGrid::new(GridSpec::line(30.0, n_x, n_v)).unwrap());
        Generator::assemble(
            OperatorTag::L,
            g,
            KernelSpec::sharp(0.5, 0.5).unwrap(),
            Scheme::Upwind,
        )
        .unwrap()
    }

    fn two_velocity(n_x: usize) -> Generator {
        let spec = GridSpec {
            velocities: VelocitySet::TwoVelocity,
            ..GridSpec::line(30.0, n_x, 2)
        };
        let g = Arc::new(PhaseGrid::new(spec).unwrap());
        Generator::assemble(
            OperatorTag::L,
            g,
            KernelSpec::sharp(0.5, 1.0).unwrap(),
            Scheme::Upwind,
        )
        .unwrap()
    }

    #[test]
    fn exact_two_velocity_state_has_unit_mass() {
        let gen = two_velocity(2400);
        let g = two_velocity_exact(gen.grid(), 0.5).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-4);
        // the continuum profile is annihilated up to discretization error
        let mut out = vec![0.0; g.values().len()];
        gen.apply(g.values(), &mut out);
        let grid = gen.grid();
        assert!(l1(grid, &out) < 0.05);
    }

    #[test]
    fn two_velocity_converges_to_explicit_profile() {
        let gen = two_velocity(600);
        let s = steady_state(&gen, &SteadyOptions::default()).unwrap();
        let exact = two_velocity_exact(gen.grid(), 0.5).unwrap();
        assert!((s.field.mass() - 1.0).abs() < 1e-12);
        assert!(s.field.min() >= 0.0);
        let err = s.field.l1_distance(&exact).unwrap();
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn power_iteration_residual_is_monotone() {
        let gen = ball(200, 8);
        let opts = SteadyOptions {
            tol: 1e-9,
            ..Default::default()
        };
        let s = steady_state(&gen, &opts).unwrap();
        for w in s.history[10..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} {}", w[0], w[1]);
        }
        assert!(s.residual_decay_rate().unwrap() < 0.0);
    }

    #[test]
    fn methods_and_initial_data_agree() {
        let gen = ball(200, 8);
        let tol = 1e-10;
        let a = steady_state(
            &gen,
            &SteadyOptions {
                tol,
                ..Default::default()
            },
        )
        .unwrap();
        let f1 = DistributionField::from_fn(gen.grid().clone(), |x, v| {
            (-(x[0] - 4.0).powi(2)).exp() * (1.0 + v[0])
        });
        let b = steady_state(
            &gen,
            &SteadyOptions {
                tol,
                method: SteadyMethod::LongTime,
                initial: Some(f1),
                ..Default::default()
            },
        )
        .unwrap();
        let gap = a.residual_decay_rate().unwrap();
        let d = a.field.l1_distance(&b.field).unwrap();
        assert!(
            d <= agreement_bound(tol, gap),
            "{d} vs {}",
            agreement_bound(tol, gap)
        );
        assert!(a.symmetry_defect < 1e-10);
        assert!(b.symmetry_defect < 1e-8);
    }

    #[test]
    fn nonconvergence_reports_history() {
        let gen = ball(100, 4);
        let err = steady_state(
            &gen,
            &SteadyOptions {
                max_iter: 5,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::NonConvergence {
                iterations,
                history,
            } => {
                assert_eq!(iterations, 5);
                assert_eq!(history.len(), 6);
            }
            other => panic!("{other:?}"),
        }
    }
}
