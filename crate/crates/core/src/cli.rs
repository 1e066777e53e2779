//! Command-line surface. Every randomized subcommand takes an explicit seed.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::bench::{self, sub_seed, CampaignConfig, Method, NOISE_TAG};
use crate::dictionary::build_grid;
use crate::error::{Error, Result};
use crate::fourier::{self, fft2_padded, SpectrumGrid};
use crate::io;
use crate::lasso::{self, SolverOptions, DEFAULT_LAMBDA, DEFAULT_PAD};
use crate::model::{
    add_noise, draw_random_scene, make_uniform_grid, subsample_random, synthesize, ComponentSet, NoiseSpec,
    SampledSignal, DEFAULT_DAMP_RANGE, DEFAULT_FREQ_RANGE, DEFAULT_NOISE_FWHM_RATIO,
};
use crate::sema::{self, SemaOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sparsespec", version, about = "Sparse 2D spectral estimation from non-uniform samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a noisy full-grid signal from a scene.
    Simulate(SimulateArgs),
    /// Keep a random subset of the points of a samples file.
    Sample(SampleArgs),
    /// Estimate components (and optionally a spectrum) from a samples file.
    Reconstruct(ReconstructArgs),
    /// Run a Monte-Carlo campaign and write the RMSE table.
    Bench(BenchArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    /// Number of random components (ignored with --scene).
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value = "40x40", value_parser = parse_shape)]
    grid: (usize, usize),
    /// Components CSV to use instead of a random scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Noise FWHM relative to the largest amplitude.
    #[arg(long, default_value_t = DEFAULT_NOISE_FWHM_RATIO)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    input: PathBuf,
    #[arg(long)]
    count: usize,
    /// Restrict the draw to the first c1 x c2 grid points.
    #[arg(long, value_parser = parse_shape)]
    corner: Option<(usize, usize)>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    input: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value = "256x256", value_parser = parse_shape)]
    freq_grid: (usize, usize),
    /// Enclosing grid; by default the smallest one holding every sample.
    #[arg(long, value_parser = parse_shape)]
    grid: Option<(usize, usize)>,
    /// Zero-padded FFT length per axis.
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: usize,
    #[arg(long)]
    spectrum_out: Option<PathBuf>,
    #[arg(long)]
    components_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// JSON campaign configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected N1xN2, got '{s}'"))?;
    let n1: usize = a.trim().parse().map_err(|_| format!("bad size '{a}'"))?;
    let n2: usize = b.trim().parse().map_err(|_| format!("bad size '{b}'"))?;
    if n1 == 0 || n2 == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((n1, n2))
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (program name first) and runs the subcommand, writing
/// messages to stdout/stderr. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Sample(a) => sample(&a),
        Command::Reconstruct(a) => reconstruct(&a),
        Command::Bench(a) => run_bench(&a),
        Command::Version => {
            println!("sparsespec {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let scene = match &a.scene {
        Some(path) => io::read_components(path)?,
        None => draw_random_scene(a.k, DEFAULT_FREQ_RANGE, DEFAULT_DAMP_RANGE, a.seed)?,
    };
    if scene.is_empty() {
        return Err(Error::Empty("scene"));
    }
    let grid = make_uniform_grid(a.grid.0, a.grid.1, 1.0, 1.0)?;
    let clean = synthesize(&scene, &grid);
    let spec = NoiseSpec {
        fwhm_ratio: a.noise,
        seed: sub_seed(a.seed, NOISE_TAG),
    };
    let noisy = add_noise(&clean, &spec, scene.max_amplitude())?;
    io::write_samples(&a.out, &noisy)?;
    if let Some(path) = &a.truth_out {
        io::write_components(path, &scene)?;
    }
    Ok(())
}

fn sample(a: &SampleArgs) -> Result<()> {
    let signal = io::read_samples(&a.input)?;
    let subset = subsample_random(&signal.scheme, a.count, a.corner, a.seed)?;
    io::write_samples(&a.out, &signal.restrict(&subset)?)
}

fn load(path: &Path, grid: Option<(usize, usize)>) -> Result<SampledSignal> {
    match grid {
        Some(shape) => io::read_samples_on_grid(path, shape),
        None => io::read_samples(path),
    }
}

/// Padded spectrum of the estimated components on the enclosing grid.
fn model_spectrum(signal: &SampledSignal, comps: &ComponentSet, pad: usize) -> Result<SpectrumGrid> {
    let (n1, n2) = signal.scheme.grid_shape();
    let (dt1, dt2) = signal.scheme.dt();
    let grid = make_uniform_grid(n1, n2, dt1, dt2)?;
    fft2_padded(&synthesize(comps, &grid), pad.max(n1), pad.max(n2))
}

fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let signal = load(&a.input, a.grid)?;
    let dict = build_grid(a.freq_grid.0, a.freq_grid.1, DEFAULT_FREQ_RANGE, None)?;
    let solver = SolverOptions {
        lambda: a.lambda,
        ..SolverOptions::default()
    };
    let (comps, spectrum) = match a.method {
        Method::Fourier => {
            let spectrum = fourier::baseline_spectrum(&signal, a.pad)?;
            (fourier::estimate(&signal, a.k, a.pad)?, spectrum)
        }
        Method::Lasso => {
            let est = lasso::estimate(&signal, &dict, a.k, &solver, a.pad)?;
            let (_, spectrum) = lasso::reconstruct_spectrum(&signal, &est.solution, a.pad)?;
            (est.components, spectrum)
        }
        Method::Sema => {
            let opts = SemaOptions {
                lambda: a.lambda,
                ..SemaOptions::default()
            };
            let (comps, _) = sema::estimate(&signal, &dict, a.k, &opts)?;
            let spectrum = model_spectrum(&signal, &comps, a.pad)?;
            (comps, spectrum)
        }
    };
    if let Some(path) = &a.spectrum_out {
        io::write_spectrum(path, &spectrum)?;
    }
    match &a.components_out {
        Some(path) => io::write_components(path, &comps)?,
        None => print!("{}", component_table(&comps)),
    }
    Ok(())
}

fn component_table(comps: &ComponentSet) -> String {
    let mut out = String::from("omega1,omega2,beta1,beta2,amp_re,amp_im\n");
    for c in comps.iter() {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            c.omega1, c.omega2, c.beta1, c.beta2, c.amplitude.re, c.amplitude.im
        );
    }
    out
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let config = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str::<CampaignConfig>(&text).map_err(|e| Error::format(path, e.to_string()))?
        }
        None => CampaignConfig::default(),
    };
    let result = match a.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(|| bench::run_campaign(&config))?,
        None => bench::run_campaign(&config)?,
    };
    io::write_results(&a.out, &result)?;
    for c in &result.cells {
        let show = |s: Option<f64>| s.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<8} {:>5.2}  freq {}  damp {}  failures {}",
            c.method.name(),
            c.fraction,
            show(c.frequency.as_ref().map(|s| s.rmse)),
            show(c.damping.as_ref().map(|s| s.rmse)),
            c.failures
        );
    }
    Ok(())
}
