//! Scenario files: typed TOML with defaults, validation and a content hash.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use runtumble::model::{GridSpec, VelocitySet};
use runtumble::particles::InitialLaw;
use runtumble::semigroup::{DtPolicy, Generator, OperatorTag, Scheme};
use runtumble::{DistributionField, KernelSpec, KernelVariant, PhaseGrid, WeightSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Pipeline {
    Simulate,
    Steady,
    Spectrum,
    DriftCheck,
    Disperse,
    AverageProbe,
    Particles,
    FitDecay,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Simulate => "simulate",
            Pipeline::Steady => "steady",
            Pipeline::Spectrum => "spectrum",
            Pipeline::DriftCheck => "drift-check",
            Pipeline::Disperse => "disperse",
            Pipeline::AverageProbe => "average-probe",
            Pipeline::Particles => "particles",
            Pipeline::FitDecay => "fit-decay",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// Pipeline executed by `run`; subcommands set it themselves.
    pub pipeline: Option<Pipeline>,
    pub seed: u64,
    pub model: ModelSection,
    pub kernel: KernelSection,
    pub weight: WeightSection,
    pub run: RunSection,
    pub initial: Vec<InitialSpec>,
    pub steady: SteadySection,
    pub spectrum: SpectrumSection,
    pub drift: DriftSection,
    pub disperse: DisperseSection,
    pub average: AverageSection,
    pub particles: ParticleSection,
    pub fit: FitSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            pipeline: None,
            seed: 0,
            model: ModelSection::default(),
            kernel: KernelSection::default(),
            weight: WeightSection::default(),
            run: RunSection::default(),
            initial: vec![InitialSpec::default()],
            steady: SteadySection::default(),
            spectrum: SpectrumSection::default(),
            drift: DriftSection::default(),
            disperse: DisperseSection::default(),
            average: AverageSection::default(),
            particles: ParticleSection::default(),
            fit: FitSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityChoice {
    Ball,
    TwoVelocity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub chi: f64,
    pub dim: usize,
    pub half_width: f64,
    pub n_x: usize,
    pub n_v: usize,
    pub n_theta: usize,
    pub velocities: VelocityChoice,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            chi: 0.5,
            dim: 1,
            half_width: 30.0,
            n_x: 1200,
            n_v: 32,
            n_theta: 16,
            velocities: VelocityChoice::Ball,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Sharp,
    Regularized,
    Surgical,
    TruncatedGainComplement,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub variant: VariantName,
    pub r: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub delta3: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            variant: VariantName::Sharp,
            r: None,
            delta1: None,
            delta2: None,
            delta3: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSection {
    pub gamma: f64,
}

impl Default for WeightSection {
    fn default() -> Self {
        Self { gamma: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    None,
    Mass,
    Positivity,
    Lyapunov,
    B1Dissipation,
    PolyDecay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub tag: OperatorTag,
    pub scheme: Scheme,
    pub horizon: f64,
    pub record_every: f64,
    pub cfl: f64,
    /// Check applied by `simulate`.
    pub check: Check,
    /// Polynomial decay parameters.
    pub k: f64,
    pub ell: f64,
    pub window: [f64; 2],
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            tag: OperatorTag::L,
            scheme: Scheme::Upwind,
            horizon: 50.0,
            record_every: 1.0,
            cfl: 0.4,
            check: Check::Mass,
            k: 2.0,
            ell: 1.0,
            window: [5.0, 200.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    GaussianBlob,
    Indicator,
    TwoVelocityExact,
    Noise,
    PowerLaw,
}

/// Named initial condition. Every shape is multiplied by `1 + skew v_0 / V0` and, when
/// `normalize` is set, scaled to unit `L1` norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub shape: Shape,
    pub x0: f64,
    pub sigma: f64,
    pub r: f64,
    /// `<x>^{-exponent}` for the power-law shape.
    pub exponent: f64,
    pub seed: u64,
    pub skew: f64,
    pub normalize: bool,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            shape: Shape::GaussianBlob,
            x0: 0.0,
            sigma: 1.0,
            r: 0.5,
            exponent: 3.5,
            seed: 0,
            skew: 0.0,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethodName {
    LongTime,
    PowerIteration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadySection {
    pub method: SteadyMethodName,
    pub tol: f64,
    pub max_iter: usize,
    /// Also solve on `2 n_x` and report the refinement ratio.
    pub refine: bool,
    /// Also run the other method and check agreement.
    pub cross_check: bool,
}

impl Default for SteadySection {
    fn default() -> Self {
        Self {
            method: SteadyMethodName::PowerIteration,
            tol: 1e-10,
            max_iter: 2_000_000,
            refine: true,
            cross_check: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub horizon: f64,
    pub record_every: f64,
    pub steady_tol: f64,
    pub krylov_dim: usize,
    pub sigma: f64,
    pub max_restarts: usize,
    /// Relative agreement required between fitted slopes and the Krylov eigenvalue.
    pub agreement: f64,
    pub max_spread: f64,
    pub min_r_squared: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            horizon: 450.0,
            record_every: 1.0,
            steady_tol: 1e-12,
            krylov_dim: 60,
            sigma: 0.01,
            max_restarts: 30,
            agreement: 0.1,
            max_spread: 0.1,
            min_r_squared: 0.99,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub n_radii: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub n_v: usize,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            n_radii: 400,
            r_min: 1e-3,
            r_max: 100.0,
            n_v: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisperseSection {
    /// Weight exponent of the dispersion statistic.
    pub gamma: f64,
    pub blob_centres: Vec<f64>,
    pub sigma: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_times: usize,
    pub nested_widths: Vec<f64>,
    /// Velocity resolution of the dispersion grid.
    pub n_v: usize,
    /// Sample times of the contraction check: `0, dt, ..., horizon` from `[run]`.
    pub contraction: bool,
}

impl Default for DisperseSection {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            blob_centres: vec![0.0, 1.0, 2.0],
            sigma: 0.1,
            t_min: 0.25,
            t_max: 20.0,
            n_times: 60,
            nested_widths: vec![1.0, 2.0, 4.0],
            n_v: 512,
            contraction: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AverageSection {
    /// Half velocity-independent white noise, half phase-space white noise.
    pub members: usize,
    pub t_max: f64,
    pub t_geometric_min: f64,
    pub n_geometric: usize,
    pub dt_uniform: f64,
}

impl Default for AverageSection {
    fn default() -> Self {
        Self {
            members: 20,
            t_max: 40.0,
            t_geometric_min: 1e-4,
            n_geometric: 200,
            dt_uniform: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleSection {
    pub n: usize,
    pub horizon: f64,
    pub law: InitialLaw,
    /// Compare the spatial histogram with the deterministic solver.
    pub compare: bool,
    pub compare_scheme: Scheme,
    pub threshold: f64,
    /// Dump the final ensemble as a binary columnar file.
    pub export: bool,
}

impl Default for ParticleSection {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            horizon: 20.0,
            law: InitialLaw::Gaussian {
                x0: vec![0.0],
                sigma: 1.0,
            },
            compare: true,
            compare_scheme: Scheme::Muscl,
            threshold: 0.02,
            export: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModeName {
    Exponential,
    Polynomial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// CSV time series `t,value`; relative paths resolve against the config file.
    pub input: Option<PathBuf>,
    pub window: [f64; 2],
    pub mode: FitModeName,
    pub min_r_squared: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            input: None,
            window: [0.0, 1.0],
            mode: FitModeName::Exponential,
            min_r_squared: 0.99,
        }
    }
}

/// Numeric overrides from the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub chi: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub n_x: Option<usize>,
    #[arg(long)]
    pub n_v: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub record_every: Option<f64>,
    #[arg(long)]
    pub cfl: Option<f64>,
    #[arg(long)]
    pub particles: Option<usize>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut s: Scenario =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if let Some(input) = &s.fit.input {
            if input.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                s.fit.input = Some(base.join(input));
            }
        }
        Ok(s)
    }

    pub fn apply(&mut self, o: &Overrides, seed: Option<u64>) {
        let m = &mut self.model;
        if let Some(v) = o.chi {
            m.chi = v;
        }
        if let Some(v) = o.dim {
            m.dim = v;
        }
        if let Some(v) = o.half_width {
            m.half_width = v;
        }
        if let Some(v) = o.n_x {
            m.n_x = v;
        }
        if let Some(v) = o.n_v {
            m.n_v = v;
        }
        if let Some(v) = o.gamma {
            self.weight.gamma = v;
        }
        if let Some(v) = o.horizon {
            self.run.horizon = v;
        }
        if let Some(v) = o.record_every {
            self.run.record_every = v;
        }
        if let Some(v) = o.cfl {
            self.run.cfl = v;
        }
        if let Some(v) = o.particles {
            self.particles.n = v;
        }
        if let Some(v) = seed {
            self.seed = v;
        }
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn grid_spec(&self) -> GridSpec {
        let m = &self.model;
        GridSpec {
            dim: m.dim,
            half_width: m.half_width,
            n_x: m.n_x,
            n_v: m.n_v,
            n_theta: m.n_theta,
            velocities: match m.velocities {
                VelocityChoice::Ball => VelocitySet::Ball,
                VelocityChoice::TwoVelocity => VelocitySet::TwoVelocity,
            },
        }
    }

    pub fn grid(&self) -> Result<Arc<PhaseGrid>, ConfigError> {
        PhaseGrid::new(self.grid_spec())
            .map(Arc::new)
            .map_err(|e| ConfigError(format!("model: {e}")))
    }

    pub fn kernel(&self, v0: f64) -> Result<KernelSpec, ConfigError> {
        let k = &self.kernel;
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| ConfigError(format!("kernel.{name} is required for this variant")))
        };
        let unused = |names: &[(&str, Option<f64>)]| -> Result<(), ConfigError> {
            for (n, v) in names {
                if v.is_some() {
                    return err(format!("kernel.{n} is not used by variant {:?}", k.variant));
                }
            }
            Ok(())
        };
        let variant = match k.variant {
            VariantName::Sharp => {
                unused(&[
                    ("r", k.r),
                    ("delta1", k.delta1),
                    ("delta2", k.delta2),
                    ("delta3", k.delta3),
                ])?;
                KernelVariant::Sharp
            }
            VariantName::Regularized => {
                unused(&[("r", k.r), ("delta1", k.delta1), ("delta2", k.delta2)])?;
                KernelVariant::Regularized {
                    delta3: need("delta3", k.delta3)?,
                }
            }
            VariantName::Surgical => KernelVariant::Surgical {
                r: need("r", k.r)?,
                delta1: need("delta1", k.delta1)?,
                delta2: need("delta2", k.delta2)?,
                delta3: need("delta3", k.delta3)?,
            },
            VariantName::TruncatedGainComplement => {
                unused(&[
                    ("delta1", k.delta1),
                    ("delta2", k.delta2),
                    ("delta3", k.delta3),
                ])?;
                KernelVariant::TruncatedGainComplement { r: need("r", k.r)? }
            }
        };
        KernelSpec::new(self.model.chi, variant, v0)
            .map_err(|e| ConfigError(format!("kernel: {e}")))
    }

    pub fn generator(&self, tag: OperatorTag, scheme: Scheme) -> Result<Generator, ConfigError> {
        let grid = self.grid()?;
        let kernel = self.kernel(grid.speed())?;
        let gen = Generator::assemble(tag, grid, kernel, scheme)
            .map_err(|e| ConfigError(format!("run.tag: {e}")))?;
        self.policy()
            .dt(&gen)
            .map_err(|e| ConfigError(format!("run.cfl: {e}")))?;
        Ok(gen)
    }

    pub fn policy(&self) -> DtPolicy {
        DtPolicy { cfl: self.run.cfl }
    }

    pub fn initial_fields(
        &self,
        grid: &Arc<PhaseGrid>,
    ) -> Result<Vec<DistributionField>, ConfigError> {
        self.initial
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                spec.build(grid, self.model.chi)
                    .map_err(|e| ConfigError(format!("initial[{k}]: {}", e.0)))
            })
            .collect()
    }

    /// Checks every constraint the selected pipeline depends on, before anything runs.
    pub fn validate(&self, pipeline: Pipeline) -> Result<(), ConfigError> {
        let m = &self.model;
        if !(m.chi > 0.0 && m.chi < 1.0) {
            return err(format!("model.chi must lie in (0, 1), got {}", m.chi));
        }
        let grid = self.grid()?;
        self.kernel(grid.speed())?;
        let r = &self.run;
        if !(r.horizon > 0.0 && r.record_every > 0.0) {
            return err("run.horizon and run.record_every must be positive");
        }
        if ((r.horizon / r.record_every).round() * r.record_every - r.horizon).abs()
            > 1e-9 * r.horizon
        {
            return err(format!(
                "run.horizon {} is not a multiple of run.record_every {}",
                r.horizon, r.record_every
            ));
        }
        if self.initial.is_empty() {
            return err("at least one [[initial]] entry is required");
        }
        let gamma = self.weight.gamma;
        match pipeline {
            Pipeline::Simulate => {
                self.generator(r.tag, r.scheme)?;
                self.initial_fields(&grid)?;
                match r.check {
                    Check::Lyapunov => {
                        if r.tag != OperatorTag::L {
                            return err("run.check = lyapunov needs run.tag = L");
                        }
                        if !(gamma > 0.0) {
                            return err("weight.gamma must be positive for the Lyapunov check");
                        }
                    }
                    Check::B1Dissipation | Check::PolyDecay => {
                        if r.tag != OperatorTag::B1 {
                            return err(format!("run.check = {:?} needs run.tag = B1", r.check));
                        }
                        if r.check == Check::B1Dissipation {
                            WeightSpec::tilde_exp(m.chi, gamma)
                                .validate(m.chi, &grid)
                                .map_err(|e| ConfigError(format!("weight.gamma: {e}")))?;
                        } else {
                            if !(r.ell > 0.0 && r.ell < r.k) {
                                return err(format!(
                                    "run.ell must lie in (0, run.k), got ell = {}, k = {}",
                                    r.ell, r.k
                                ));
                            }
                            if !(r.window[0] < r.window[1] && r.window[1] <= r.horizon + 1e-12) {
                                return err(
                                    "run.window must be increasing and end before run.horizon",
                                );
                            }
                        }
                    }
                    Check::Mass | Check::Positivity | Check::None => {}
                }
            }
            Pipeline::Steady => {
                self.generator(OperatorTag::L, r.scheme)?;
                self.initial_fields(&grid)?;
                if !(self.steady.tol > 0.0) {
                    return err("steady.tol must be positive");
                }
            }
            Pipeline::Spectrum => {
                self.generator(OperatorTag::L, r.scheme)?;
                self.initial_fields(&grid)?;
                let s = &self.spectrum;
                if !(s.horizon > 0.0 && s.record_every > 0.0 && s.krylov_dim >= 4) {
                    return err("spectrum.horizon, spectrum.record_every must be positive and spectrum.krylov_dim >= 4");
                }
            }
            Pipeline::DriftCheck => {
                if !(gamma > 0.0) {
                    return err(format!("weight.gamma must be positive, got {gamma}"));
                }
                let d = &self.drift;
                if d.n_radii < 2 || !(d.r_min > 0.0 && d.r_max > d.r_min) || d.n_v == 0 {
                    return err("drift needs n_radii >= 2, 0 < r_min < r_max and n_v >= 1");
                }
            }
            Pipeline::Disperse => {
                let c = runtumble::model::model_constants(m.chi, m.dim)
                    .map_err(|e| ConfigError(format!("model: {e}")))?;
                let d = &self.disperse;
                if !(d.gamma >= 0.0 && d.gamma < c.gamma_star) {
                    return err(format!(
                        "disperse.gamma must lie in [0, {}), got {}",
                        c.gamma_star, d.gamma
                    ));
                }
                if d.contraction && !(gamma >= 0.0) {
                    return err("weight.gamma must be nonnegative");
                }
                if d.blob_centres.is_empty()
                    || d.n_times < 2
                    || !(d.t_min > 0.0 && d.t_max > d.t_min)
                    || d.n_v == 0
                {
                    return err(
                        "disperse needs blob centres, n_times >= 2, 0 < t_min < t_max and n_v >= 1",
                    );
                }
                PhaseGrid::new(GridSpec {
                    n_v: d.n_v,
                    ..self.grid_spec()
                })
                .map_err(|e| ConfigError(format!("disperse.n_v: {e}")))?;
                self.initial_fields(&grid)?;
            }
            Pipeline::AverageProbe => {
                let a = &self.average;
                if grid.dim() != 1 && !m.n_x.is_multiple_of(2) {
                    return err("average probe needs an even n_x");
                }
                if a.members < 2
                    || !(a.t_max > 1.0
                        && a.t_geometric_min > 0.0
                        && a.t_geometric_min < 1.0
                        && a.n_geometric >= 2
                        && a.dt_uniform > 0.0)
                {
                    return err("average needs members >= 2, t_max > 1, 0 < t_geometric_min < 1, n_geometric >= 2, dt_uniform > 0");
                }
            }
            Pipeline::Particles => {
                let p = &self.particles;
                if p.n == 0 || !(p.horizon > 0.0) {
                    return err("particles.n and particles.horizon must be positive");
                }
                if p.compare {
                    if !matches!(
                        p.law,
                        InitialLaw::Gaussian { .. }
                            | InitialLaw::Indicator { .. }
                            | InitialLaw::UniformBox { .. }
                    ) {
                        return err("particles.compare needs a law with a density (gaussian, indicator, uniform_box)");
                    }
                    self.generator(OperatorTag::L, p.compare_scheme)?;
                }
                law_density(&p.law, &grid)
                    .map_err(|e| ConfigError(format!("particles.law: {}", e.0)))?;
            }
            Pipeline::FitDecay => {
                let f = &self.fit;
                let Some(input) = &f.input else {
                    return err("fit.input is required");
                };
                if !input.is_file() {
                    return err(format!(
                        "fit.input {} is not a readable file",
                        input.display()
                    ));
                }
                if !(f.window[0] < f.window[1]) {
                    return err("fit.window must be increasing");
                }
            }
        }
        Ok(())
    }
}

impl InitialSpec {
    pub fn build(&self, grid: &Arc<PhaseGrid>, chi: f64) -> Result<DistributionField, ConfigError> {
        if !(self.skew.abs() <= 1.0) {
            return err(format!("skew must lie in [-1, 1], got {}", self.skew));
        }
        let v0 = grid.speed();
        let skew = self.skew;
        let x0 = self.x0;
        let along = move |x: &[f64]| -> f64 {
            x.iter()
                .enumerate()
                .map(|(a, xa)| if a == 0 { (xa - x0).powi(2) } else { xa * xa })
                .sum::<f64>()
        };
        let factor = move |v: &[f64]| 1.0 + skew * v[0] / v0;
        let mut f = match self.shape {
            Shape::GaussianBlob => {
                if !(self.sigma > 0.0) {
                    return err("sigma must be positive");
                }
                let s2 = self.sigma * self.sigma;
                DistributionField::from_fn(grid.clone(), |x, v| {
                    (-0.5 * along(x) / s2).exp() * factor(v)
                })
            }
            Shape::Indicator => {
                if !(self.r > 0.0) {
                    return err("r must be positive");
                }
                let r2 = self.r * self.r;
                DistributionField::from_fn(grid.clone(), |x, v| {
                    if along(x) <= r2 {
                        factor(v)
                    } else {
                        0.0
                    }
                })
            }
            Shape::TwoVelocityExact => runtumble::analysis::two_velocity_exact(grid, chi)
                .map_err(|e| ConfigError(e.to_string()))?,
            Shape::Noise => {
                if !(self.sigma > 0.0) {
                    return err("sigma must be positive");
                }
                let noise = DistributionField::noise(grid.clone(), self.seed);
                let s2 = self.sigma * self.sigma;
                let n_v = grid.n_v();
                let dim = grid.dim();
                let vals = noise
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, z)| {
                        let p = grid.position(i / n_v);
                        z * (-0.5 * along(&p[..dim]) / s2).exp() * factor(grid.velocity(i % n_v))
                    })
                    .collect();
                DistributionField::from_values(grid.clone(), vals)
                    .map_err(|e| ConfigError(e.to_string()))?
            }
            Shape::PowerLaw => {
                if !(self.exponent > 0.0) {
                    return err("exponent must be positive");
                }
                let e = self.exponent;
                DistributionField::from_fn(grid.clone(), |x, v| {
                    (1.0 + along(x)).powf(-0.5 * e) * factor(v)
                })
            }
        };
        if self.normalize {
            let l1 = f.weighted_sum(|_, _, v| v.abs());
            if !(l1 > 0.0) {
                return err("initial field vanishes on the grid");
            }
            f.scale(1.0 / l1);
        }
        Ok(f)
    }
}

/// Probability density of a particle law on the grid (uniform in velocity).
pub fn law_density(
    law: &InitialLaw,
    grid: &Arc<PhaseGrid>,
) -> Result<DistributionField, ConfigError> {
    let dim = grid.dim();
    let centre = |x0: &[f64]| -> Result<Vec<f64>, ConfigError> {
        if x0.len() != dim {
            return err(format!("x0 has {} components for dim {dim}", x0.len()));
        }
        Ok(x0.to_vec())
    };
    let f = match law {
        InitialLaw::Gaussian { x0, sigma } => {
            let c = centre(x0)?;
            let s2 = sigma * sigma;
            let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.5 * dim as f64);
            DistributionField::from_fn(grid.clone(), |x, _| {
                let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                norm * (-0.5 * r2 / s2).exp()
            })
        }
        InitialLaw::Indicator { x0, r } => {
            let c = centre(x0)?;
            let vol = match dim {
                1 => 2.0 * r,
                _ => std::f64::consts::PI * r * r,
            };
            DistributionField::from_fn(grid.clone(), |x, _| {
                let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                if r2 <= r * r {
                    1.0 / vol
                } else {
                    0.0
                }
            })
        }
        InitialLaw::UniformBox { half_width } => {
            let vol = (2.0 * half_width).powi(dim as i32);
            DistributionField::from_fn(grid.clone(), |x, _| {
                if x.iter().all(|a| a.abs() <= *half_width) {
                    1.0 / vol
                } else {
                    0.0
                }
            })
        }
        InitialLaw::Point { x0 } => {
            centre(x0)?;
            return err("a point law has no density on the grid");
        }
    };
    Ok(f)
}
