use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{japanese_bracket, v0, KernelSpec};

/// Uniform draw from the centred ball of unit volume in dimension `dim` (1 to 3).
pub fn uniform_ball_sample<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> [f64; 3] {
    let r0 = v0(dim);
    match dim {
        1 => [r0 * (2.0 * rng.random::<f64>() - 1.0), 0.0, 0.0],
        2 => {
            let r = r0 * rng.random::<f64>().sqrt();
            let th = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            [r * th.cos(), r * th.sin(), 0.0]
        }
        _ => loop {
            let c = [
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
            ];
            if c.iter().map(|z| z * z).sum::<f64>() <= 1.0 {
                break [r0 * c[0], r0 * c[1], r0 * c[2]];
            }
        },
    }
}

/// First accepted event in `(t_start, t_end]` of a thinned Poisson clock with
/// constant `majorant`; `rate(t)` must not exceed it.
pub fn next_accepted_event<R: Rng + ?Sized>(
    rng: &mut R,
    majorant: f64,
    t_start: f64,
    t_end: f64,
    mut rate: impl FnMut(f64) -> f64,
) -> Option<f64> {
    let mut t = t_start;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / majorant;
        if t > t_end {
            return None;
        }
        if rng.random::<f64>() * majorant < rate(t) {
            return Some(t);
        }
    }
}

/// Initial position law; velocities are always uniform on the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InitialLaw {
    Point {
        x0: Vec<f64>,
    },
    Gaussian {
        x0: Vec<f64>,
        sigma: f64,
    },
    /// Uniform on the ball of radius `r` around `x0` (a segment in dim 1).
    Indicator {
        x0: Vec<f64>,
        r: f64,
    },
    /// Uniform on the box `[-half_width, half_width]^dim`.
    UniformBox {
        half_width: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepReport {
    pub candidates: u64,
    pub jumps: u64,
}

/// Independent particles with per-particle counter-based random streams.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<[f64; 3]>,
    velocities: Vec<[f64; 3]>,
    seed: u64,
    counters: Vec<u64>,
    time: f64,
}

fn stream(seed: u64, index: usize, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.set_word_pos(counter as u128);
    rng
}

fn sample_position(rng: &mut ChaCha8Rng, dim: usize, law: &InitialLaw) -> [f64; 3] {
    let mut x = [0.0; 3];
    match law {
        InitialLaw::Point { x0 } => x[..dim].copy_from_slice(&x0[..dim]),
        InitialLaw::Gaussian { x0, sigma } => {
            for a in 0..dim {
                let z: f64 = StandardNormal.sample(rng);
                x[a] = x0[a] + sigma * z;
            }
        }
        InitialLaw::Indicator { x0, r } => loop {
            let mut c = [0.0; 3];
            for z in c.iter_mut().take(dim) {
                *z = 2.0 * rng.random::<f64>() - 1.0;
            }
            if c.iter().map(|z| z * z).sum::<f64>() <= 1.0 {
                for a in 0..dim {
                    x[a] = x0[a] + r * c[a];
                }
                break;
            }
        },
        InitialLaw::UniformBox { half_width } => {
            for z in x.iter_mut().take(dim) {
                *z = half_width * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
    x
}

impl ParticleEnsemble {
    /// Draws `n` particles; particle `i` uses stream `i` of the ChaCha generator keyed by `seed`.
    pub fn sample(n: usize, dim: usize, seed: u64, law: &InitialLaw) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!(
                "particles support dim 1 to 3, got {dim}"
            )));
        }
        match law {
            InitialLaw::Point { x0 }
            | InitialLaw::Gaussian { x0, .. }
            | InitialLaw::Indicator { x0, .. }
                if x0.len() != dim =>
            {
                return Err(Error::Config(format!(
                    "initial centre has {} components for dim {dim}",
                    x0.len()
                )));
            }
            _ => {}
        }
        let drawn: Vec<([f64; 3], [f64; 3], u64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, i, 0);
                let x = sample_position(&mut rng, dim, law);
                let v = uniform_ball_sample(&mut rng, dim);
                (x, v, rng.get_word_pos() as u64)
            })
            .collect();
        let mut positions = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        let mut counters = Vec::with_capacity(n);
        for (x, v, c) in drawn {
            positions.push(x);
            velocities.push(v);
            counters.push(c);
        }
        Ok(Self {
            dim,
            positions,
            velocities,
            seed,
            counters,
            time: 0.0,
        })
    }

    pub fn from_parts(
        dim: usize,
        positions: Vec<[f64; 3]>,
        velocities: Vec<[f64; 3]>,
        seed: u64,
    ) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::Mismatch(
                "positions and velocities differ in length".into(),
            ));
        }
        let speed = v0(dim);
        if velocities
            .iter()
            .any(|v| crate::norm(&v[..dim]) > speed * (1.0 + 1e-12))
        {
            return Err(Error::Domain(format!(
                "a velocity exceeds the ball radius {speed}"
            )));
        }
        let n = positions.len();
        Ok(Self {
            dim,
            positions,
            velocities,
            seed,
            counters: vec![0; n],
            time: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i][..self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i][..self.dim]
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    /// Advances every particle by `horizon` with jump rate `kernel(x, v)` (thinning with majorant `1 + chi`).
    pub fn step(&mut self, horizon: f64, kernel: &KernelSpec) -> Result<StepReport> {
        if !(horizon >= 0.0) {
            return Err(Error::Domain(format!(
                "horizon must be nonnegative, got {horizon}"
            )));
        }
        if (kernel.v0 - v0(self.dim)).abs() > 1e-12 {
            return Err(Error::Config(
                "kernel velocity radius does not match the particle dimension".into(),
            ));
        }
        if horizon == 0.0 {
            return Ok(StepReport::default());
        }
        let dim = self.dim;
        let seed = self.seed;
        let majorant = 1.0 + kernel.chi;
        let reports: Vec<StepReport> = self
            .positions
            .par_iter_mut()
            .zip(self.velocities.par_iter_mut())
            .zip(self.counters.par_iter_mut())
            .enumerate()
            .map(|(i, ((x, v), counter))| {
                let mut rng = stream(seed, i, *counter);
                let mut report = StepReport::default();
                let mut t = 0.0;
                loop {
                    let u: f64 = rng.random();
                    let tau = -(1.0 - u).ln() / majorant;
                    if t + tau > horizon {
                        for a in 0..dim {
                            x[a] += v[a] * (horizon - t);
                        }
                        break;
                    }
                    t += tau;
                    for a in 0..dim {
                        x[a] += v[a] * tau;
                    }
                    report.candidates += 1;
                    let rate = kernel.eval_unchecked(&x[..dim], &v[..dim]);
                    if rng.random::<f64>() * majorant < rate {
                        *v = uniform_ball_sample(&mut rng, dim);
                        report.jumps += 1;
                    }
                }
                *counter = rng.get_word_pos() as u64;
                report
            })
            .collect();
        self.time += horizon;
        Ok(reports
            .into_iter()
            .fold(StepReport::default(), |a, b| StepReport {
                candidates: a.candidates + b.candidates,
                jumps: a.jumps + b.jumps,
            }))
    }

    /// Ensemble mean of `exp(gamma <x>)` with its Monte Carlo standard error.
    pub fn exp_moment(&self, gamma: f64) -> (f64, f64) {
        let n = self.len() as f64;
        let vals: Vec<f64> = self
            .positions
            .iter()
            .map(|x| (gamma * japanese_bracket(&x[..self.dim])).exp())
            .collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelVariant;

    #[test]
    fn ball_samples_have_uniform_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = uniform_ball_sample(&mut rng, 1)[0];
            assert!(v.abs() <= 0.5);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        // sd of the mean is sqrt(1/12 / n); sd of the sample second moment is sqrt(1/80 - 1/144) / sqrt(n)
        assert!(mean.abs() < 3.0 * (1.0f64 / 12.0 / n as f64).sqrt());
        assert!(
            (var - 1.0 / 12.0).abs()
                < 3.0 * (1.0f64 / 80.0 - 1.0 / 144.0).sqrt() / (n as f64).sqrt()
        );
    }

    #[test]
    fn planar_ball_first_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let v = uniform_ball_sample(&mut rng, 2);
            assert!((v[0] * v[0] + v[1] * v[1]).sqrt() <= v0(2));
            acc += v[0].abs();
            acc2 += v[0] * v[0];
        }
        let mean = acc / n as f64;
        let sd = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - crate::model::v1(2)).abs() < 3.0 * sd);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let v = uniform_ball_sample(&mut rng, 3);
            assert!(crate::norm(&v) <= v0(3));
        }
    }

    #[test]
    fn thinning_rate_matches_constant_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = 100_000;
        let (mut count, mut t) = (0u64, 0.0);
        while count < target {
            t = next_accepted_event(&mut rng, 1.5, t, f64::INFINITY, |_| 1.5).unwrap();
            count += 1;
        }
        let rate = count as f64 / t;
        // Poisson count over time t has sd sqrt(1.5 t)
        assert!((rate - 1.5).abs() < 3.0 * (1.5 * t).sqrt() / t);
    }

    #[test]
    fn unbiased_kernel_accepts_every_candidate() {
        // chi close to zero: acceptance probability tends to one
        let kernel = KernelSpec::sharp(1e-12, 0.5).unwrap();
        let mut ens =
            ParticleEnsemble::sample(20_000, 1, 1, &InitialLaw::Point { x0: vec![0.0] }).unwrap();
        let rep = ens.step(5.0, &kernel).unwrap();
        assert_eq!(rep.candidates, rep.jumps);
        let per_particle = rep.jumps as f64 / 20_000.0 / 5.0;
        assert!((per_particle - 1.0).abs() < 3.0 * (1.0f64 / (20_000.0 * 5.0)).sqrt());
    }

    #[test]
    fn zero_horizon_is_identity_and_runs_reproduce() {
        let kernel = KernelSpec::sharp(0.5, 0.5).unwrap();
        let law = InitialLaw::Gaussian {
            x0: vec![1.0],
            sigma: 0.5,
        };
        let mut a = ParticleEnsemble::sample(5_000, 1, 42, &law).unwrap();
        let before = a.clone();
        a.step(0.0, &kernel).unwrap();
        assert_eq!(a, before);
        let mut b = before.clone();
        a.step(3.0, &kernel).unwrap();
        a.step(2.0, &kernel).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        pool.install(|| {
            b.step(3.0, &kernel).unwrap();
            b.step(2.0, &kernel).unwrap();
        });
        assert_eq!(a, b);
        assert!((0..a.len()).all(|i| a.velocity(i)[0].abs() <= 0.5));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(ParticleEnsemble::sample(10, 2, 0, &InitialLaw::Point { x0: vec![0.0] }).is_err());
        assert!(ParticleEnsemble::from_parts(1, vec![[0.0; 3]], vec![[0.7, 0.0, 0.0]], 0).is_err());
        let k = KernelSpec::new(0.5, KernelVariant::Sharp, 0.5).unwrap();
        let mut e =
            ParticleEnsemble::sample(10, 2, 0, &InitialLaw::Point { x0: vec![0.0, 0.0] }).unwrap();
        assert!(e.step(1.0, &k).is_err());
    }
}
