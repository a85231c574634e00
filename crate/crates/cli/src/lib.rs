//! Scenario runner for the runtumble solver: configs in, reports and manifests out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod config;
pub mod output;
pub mod pipelines;
pub mod reproduce;

use config::{Overrides, Pipeline, Scenario};
use output::Sink;
use pipelines::CliError;

/// Run-and-tumble kinetic solver: scenarios, probes and reproducible manifests.
#[derive(Debug, Parser)]
#[command(name = "runtumble", version)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline named in the config file.
    Run(Common),
    /// Evolve the initial fields and run the configured check.
    Simulate(Common),
    /// Compute the steady state and compare it with the exact profile when one exists.
    Steady(Common),
    /// Estimate the spectral gap from decay fits and a Krylov eigenvalue solve.
    Spectrum(Common),
    /// Print the drift certificate and check it on a radial grid.
    DriftCheck(Common),
    /// Run the transport contraction and dispersion probes.
    Disperse(Common),
    /// Run the velocity averaging regularity probe.
    AverageProbe(Common),
    /// Simulate the velocity-jump process and compare it with the kinetic solution.
    Particles(Common),
    /// Fit a decay rate to a recorded time series.
    FitDecay(Common),
    /// Re-execute a recorded run and compare its outputs bit for bit.
    Reproduce { manifest: PathBuf },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; RUNTUMBLE_OUT takes precedence.
    #[arg(long, default_value = "runtumble-out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten, next_help_heading = "Overrides")]
    overrides: Overrides,
}

fn init_threads(threads: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        let built = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
        // an existing global pool of the requested size is fine
        if let Err(e) = built {
            if rayon::current_num_threads() != n {
                return Err(CliError::Config(format!("thread pool: {e}")));
            }
        }
    }
    Ok(rayon::current_num_threads())
}

fn resolve(common: &Common, pipeline: Option<Pipeline>) -> Result<(Scenario, Pipeline), CliError> {
    let mut scenario = match &common.config {
        Some(path) => Scenario::load(path)?,
        None if pipeline.is_none() => return Err(CliError::Config("run needs --config".into())),
        None => Scenario::default(),
    };
    scenario.apply(&common.overrides, common.seed);
    let pipeline = match pipeline.or(scenario.pipeline) {
        Some(p) => p,
        None => return Err(CliError::Config("pipeline is not set in the config".into())),
    };
    scenario.pipeline = Some(pipeline);
    scenario.validate(pipeline)?;
    Ok((scenario, pipeline))
}

fn run(
    common: &Common,
    pipeline: Option<Pipeline>,
    threads: Option<usize>,
) -> Result<bool, CliError> {
    let (scenario, pipeline) = resolve(common, pipeline)?;
    let threads = init_threads(threads)?;
    let out = std::env::var_os("RUNTUMBLE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| common.out.clone());
    let hash = scenario.hash();
    let mut sink = Sink::create(&out, &hash)?;
    pipelines::execute(&scenario, pipeline, &mut sink)?;
    let passed = sink.all_passed();
    sink.finish(&scenario, pipeline.name(), threads)?;
    println!("scenario {hash}: outputs in {}", out.display());
    Ok(passed)
}

fn reproduce(manifest: &Path, threads: Option<usize>) -> Result<bool, CliError> {
    let recorded = reproduce::load_manifest(manifest)?;
    init_threads(threads.or(Some(recorded.threads)))?;
    let scratch = tempfile::tempdir()?;
    let rep = reproduce::reproduce(manifest, scratch.path()).map_err(|e| match e {
        CliError::Mismatch(_) => e,
        other => CliError::Mismatch(other.to_string()),
    })?;
    println!("reproduced {} outputs bit for bit", rep.files);
    Ok(true)
}

/// Parses `args` (program name first), runs the command and returns the exit code:
/// 0 when every probe passes, 1 on a failed probe or runtime error, 2 on a config error.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    let result = match &cli.command {
        Command::Run(c) => run(c, None, cli.threads),
        Command::Simulate(c) => run(c, Some(Pipeline::Simulate), cli.threads),
        Command::Steady(c) => run(c, Some(Pipeline::Steady), cli.threads),
        Command::Spectrum(c) => run(c, Some(Pipeline::Spectrum), cli.threads),
        Command::DriftCheck(c) => run(c, Some(Pipeline::DriftCheck), cli.threads),
        Command::Disperse(c) => run(c, Some(Pipeline::Disperse), cli.threads),
        Command::AverageProbe(c) => run(c, Some(Pipeline::AverageProbe), cli.threads),
        Command::Particles(c) => run(c, Some(Pipeline::Particles), cli.threads),
        Command::FitDecay(c) => run(c, Some(Pipeline::FitDecay), cli.threads),
        Command::Reproduce { manifest } => reproduce(manifest, cli.threads),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
