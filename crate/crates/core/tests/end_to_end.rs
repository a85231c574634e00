//! Whole-pipeline checks through the public API on small grids.

use std::sync::Arc;

use runtumble::analysis::{steady_state, two_velocity_exact, SteadyOptions};
use runtumble::model::{v0, GridSpec};
use runtumble::particles::{
    read_binary, spatial_histogram, write_binary, InitialLaw, ParticleEnsemble,
};
use runtumble::semigroup::{evolve, DtPolicy, Generator, OperatorTag, Scheme};
use runtumble::{DistributionField, KernelSpec, PhaseGrid, VelocitySet};

const CHI: f64 = 0.5;

fn line(half_width: f64, n_x: usize, n_v: usize) -> Arc<PhaseGrid> {
    Arc::new(PhaseGrid::new(GridSpec::line(half_width, n_x, n_v)).unwrap())
}

fn gaussian(grid: &Arc<PhaseGrid>, x0: f64, sigma: f64) -> DistributionField {
    let mut f = DistributionField::from_fn(grid.clone(), |x, _| {
        (-(x[0] - x0).powi(2) / (2.0 * sigma * sigma)).exp()
    });
    let m = f.mass();
    f.scale(1.0 / m);
    f
}

#[test]
fn mass_is_balanced_by_boundary_outflow() {
    let grid = line(6.0, 240, 16);
    let gen = Generator::assemble(
        OperatorTag::L,
        grid.clone(),
        KernelSpec::sharp(CHI, grid.speed()).unwrap(),
        Scheme::Upwind,
    )
    .unwrap();
    let f0 = gaussian(&grid, 3.0, 0.5);
    let trace = evolve(&gen, &f0, 30.0, 1.0, DtPolicy::default(), &[]).unwrap();
    let leaked = *trace.leak.last().unwrap();
    assert!(leaked > 1e-6, "nothing reached the boundary");
    for (m, l) in trace.mass.iter().zip(&trace.leak) {
        assert!((m + l - 1.0).abs() < 1e-12, "mass {m} + leak {l}");
    }
    assert!(trace.stats.global_min >= 0.0);
}

#[test]
fn upwind_approaches_muscl_at_first_order() {
    let gap = |n_x| {
        let grid = line(8.0, n_x, 16);
        let kernel = KernelSpec::sharp(CHI, grid.speed()).unwrap();
        let f0 = gaussian(&grid, 0.0, 1.0);
        let run = |scheme| {
            let gen = Generator::assemble(OperatorTag::L, grid.clone(), kernel, scheme).unwrap();
            evolve(&gen, &f0, 4.0, 4.0, DtPolicy::default(), &[])
                .unwrap()
                .final_field
        };
        run(Scheme::Upwind)
            .l1_distance(&run(Scheme::Muscl))
            .unwrap()
    };
    let (coarse, fine) = (gap(200), gap(400));
    assert!(coarse < 0.1, "schemes differ by {coarse}");
    assert!((1.6..2.4).contains(&(coarse / fine)), "{coarse} -> {fine}");
}

#[test]
fn two_velocity_steady_state_converges_under_refinement() {
    let error = |n_x| {
        let grid = Arc::new(
            PhaseGrid::new(GridSpec {
                velocities: VelocitySet::TwoVelocity,
                ..GridSpec::line(10.0, n_x, 2)
            })
            .unwrap(),
        );
        let gen = Generator::assemble(
            OperatorTag::L,
            grid.clone(),
            KernelSpec::sharp(CHI, grid.speed()).unwrap(),
            Scheme::Upwind,
        )
        .unwrap();
        let opts = SteadyOptions {
            tol: 1e-9,
            ..SteadyOptions::default()
        };
        let g = steady_state(&gen, &opts).unwrap();
        let exact = two_velocity_exact(&grid, CHI).unwrap();
        g.field.l1_distance(&exact).unwrap()
    };
    let (coarse, fine) = (error(100), error(200));
    assert!(fine < coarse, "{coarse} -> {fine}");
    assert!(coarse / fine > 1.5, "ratio {}", coarse / fine);
}

#[test]
fn particles_match_the_kinetic_solution() {
    let grid = line(10.0, 200, 32);
    let kernel = KernelSpec::sharp(CHI, grid.speed()).unwrap();
    let mut ens = ParticleEnsemble::sample(
        200_000,
        1,
        7,
        &InitialLaw::Gaussian {
            x0: vec![1.0],
            sigma: 1.0,
        },
    )
    .unwrap();
    ens.step(3.0, &kernel).unwrap();
    let hist = spatial_histogram(&ens, &grid).unwrap();
    assert!((hist.mass(&grid) - 1.0).abs() < 1e-12);

    let f0 = gaussian(&grid, 1.0, 1.0);
    let gen = Generator::assemble(OperatorTag::L, grid.clone(), kernel, Scheme::Muscl).unwrap();
    let f = evolve(&gen, &f0, 3.0, 3.0, DtPolicy::default(), &[])
        .unwrap()
        .final_field;
    let dist = hist.l1_distance(&grid, &f.density()).unwrap();
    assert!(dist < 0.05, "L1 distance {dist}");
}

#[test]
fn exported_ensemble_reads_back() {
    let kernel = KernelSpec::sharp(CHI, v0(2)).unwrap();
    let mut ens = ParticleEnsemble::sample(
        500,
        2,
        11,
        &InitialLaw::Indicator {
            x0: vec![0.0, 0.0],
            r: 1.0,
        },
    )
    .unwrap();
    ens.step(1.5, &kernel).unwrap();
    let mut bytes = Vec::new();
    write_binary(&ens, &mut bytes).unwrap();
    let (dim, x, v) = read_binary(bytes.as_slice()).unwrap();
    assert_eq!(dim, 2);
    assert_eq!(x.len(), ens.len());
    for i in 0..ens.len() {
        assert_eq!(x[i].as_slice(), ens.position(i));
        assert_eq!(v[i].as_slice(), ens.velocity(i));
    }
}
