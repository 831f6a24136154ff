use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use num_complex::Complex64;
use rankshape::elliptical::{sample_contaminated, Dataset};
use rankshape::harness::spec::{parse_preliminary, toeplitz, Family, GeneratorSpec, ScoreChoice};
use rankshape::harness::{self, ExperimentSpec, MetricRow, Scenario};
use rankshape::restimator::{r_estimate, REstimatorConfig};
use rankshape::{MatrixField, Scalar};

#[derive(Parser)]
#[command(name = "rankshape", version, about = "Rank-based shape matrix estimation and Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// R-estimate of shape for a CSV dataset; prints JSON.
    Estimate(EstimateArgs),
    /// MSE index versus sample size or distribution parameter.
    MseSweep(SweepArgs),
    /// Finite-sample breakdown curve.
    BpCurve(SweepArgs),
    /// Empirical influence function.
    EifCurve(SweepArgs),
    /// MSE and PD-violation rate versus the perturbation scale.
    AlphaSweep(SweepArgs),
    /// Draw an elliptical (optionally contaminated) dataset as CSV.
    Sample(SampleArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment specification.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the master seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination (default: the spec's `output`, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV with header `x1,..` (real) or `x1_re,x1_im,..` (complex).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "complex")]
    field: MatrixField,
    /// `vdw` or `t<nu>`.
    #[arg(long, default_value = "vdw")]
    score: String,
    /// `tyler`, `scm` or `huber:<q>`.
    #[arg(long, default_value = "tyler")]
    preliminary: String,
    #[arg(long, default_value_t = rankshape::restimator::DEFAULT_PERTURBATION_SCALE)]
    upsilon: f64,
    /// Seed of the perturbation matrix.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for symmetry with the sweep commands; estimation is serial.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value = "complex")]
    field: MatrixField,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    samples: usize,
    /// `gaussian`, `gg` or `t`.
    #[arg(long, default_value = "gaussian")]
    family: String,
    /// Generalized Gaussian shape.
    #[arg(long)]
    shape: Option<f64>,
    /// Student-t degrees of freedom.
    #[arg(long)]
    dof: Option<f64>,
    /// `E{Q}/N` (default 4 complex, 1 real).
    #[arg(long)]
    power: Option<f64>,
    /// Toeplitz correlation modulus (0 gives the identity).
    #[arg(long, default_value_t = 0.0)]
    rho_abs: f64,
    /// Toeplitz correlation phase as a fraction of a full turn.
    #[arg(long, default_value_t = 0.0)]
    rho_phase: f64,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    outlier_shape: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sweep(args: &SweepArgs, scenarios: &[Scenario], name: &str) -> Result<()> {
    let mut spec = ExperimentSpec::from_path(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    if !scenarios.contains(&spec.scenario) {
        bail!("`{name}` cannot run a spec with scenario '{}'", spec.scenario.name());
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let rows: Vec<MetricRow> = harness::run_experiment(&spec, args.workers)?;
    let dest = args.out.clone().or_else(|| {
        spec.output.as_ref().map(|p| match &spec.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        })
    });
    let mut w = output(dest.as_deref())?;
    harness::write_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn estimate_typed<T: Scalar>(args: &EstimateArgs) -> Result<serde_json::Value> {
    let file = File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let data = Dataset::<T>::read_csv(BufReader::new(file))?;
    let score = match ScoreChoice::parse(&args.score)? {
        ScoreChoice::VanDerWaerden => rankshape::scores::ScoreFunction::van_der_waerden(data.dim(), T::FIELD),
        ScoreChoice::StudentT(nu) => rankshape::scores::ScoreFunction::student_t(nu, data.dim(), T::FIELD)?,
        ScoreChoice::TrueGenerator => bail!("the true-generator score needs a known model; use vdw or t<nu>"),
    };
    let mut cfg = REstimatorConfig::<T>::new(score);
    cfg.preliminary = parse_preliminary(&args.preliminary)?;
    cfg.perturbation_scale = args.upsilon;
    cfg.perturbation_seed = args.seed;
    Ok(r_estimate(&data, &cfg)?.to_json())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let json = match args.field {
        MatrixField::Real => estimate_typed::<f64>(args)?,
        MatrixField::Complex => estimate_typed::<Complex64>(args)?,
    };
    let mut w = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &json)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn sample_typed<T: Scalar>(args: &SampleArgs) -> Result<()> {
    let family = match args.family.as_str() {
        "gaussian" => Family::Gaussian,
        "gg" => Family::Gg,
        "t" => Family::T,
        other => bail!("unknown family '{other}'"),
    };
    let gspec = GeneratorSpec { family, shape: args.shape, dof: args.dof, power: args.power, scale: None };
    let gen = gspec.build(args.dim, T::FIELD)?;
    let sigma = toeplitz::<T>(args.dim, args.rho_abs, args.rho_phase)?;
    let data = sample_contaminated(&gen, &DVector::<T>::zeros(args.dim), &sigma, args.samples, args.eps, args.outlier_shape, args.seed)?;
    let mut w = output(args.out.as_deref())?;
    data.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::MseSweep(a) => sweep(a, &[Scenario::MseVsL, Scenario::MseVsParam], "mse-sweep"),
        Command::BpCurve(a) => sweep(a, &[Scenario::BpCurve], "bp-curve"),
        Command::EifCurve(a) => sweep(a, &[Scenario::EifCurve], "eif-curve"),
        Command::AlphaSweep(a) => sweep(a, &[Scenario::AlphaSweep], "alpha-sweep"),
        Command::Sample(a) => match a.field {
            MatrixField::Real => sample_typed::<f64>(a),
            MatrixField::Complex => sample_typed::<Complex64>(a),
        },
    }
}
