//! Command-line interface: synthesize scenes, degrade them, unmix, score,
//! and replay full manifest-driven pipelines.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags or invalid
//! parameter combinations), 1 on runtime failures (missing files, format
//! errors, solver failures).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rhuidr_core::io::{
    export_abundance_pgm, read_cube, read_matrix_csv, run_manifest, write_cube, write_matrix_csv,
    write_trace_csv, RunManifest,
};
use rhuidr_core::metrics::{mpsnr, mssim, ps, rmse, sre, MetricReport, PS_THRESHOLD};
use rhuidr_core::simulate::{clean_scene, derive_seeds, gen_abundance, gen_endmembers, make_case,
    SceneSpec};
use rhuidr_core::types::{Dims, EndmemberLibrary, HSCube};
use rhuidr_core::unmix::{unmix, Regularizer, RhuidrConfig};
use rhuidr_core::RhuidrError;

#[derive(Parser)]
#[command(name = "rhuidr", version, about = "Robust hyperspectral unmixing under mixed noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic scene (library, abundances, clean cube).
    Synth(SynthArgs),
    /// Apply one of the eight mixed-noise cases to a cube.
    Degrade(DegradeArgs),
    /// Unmix a cube against an endmember library.
    Unmix(UnmixArgs),
    /// Score an estimate against ground truth.
    Metrics(MetricsArgs),
    /// Execute a full manifest-driven pipeline.
    Run(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    bands: usize,
    #[arg(long)]
    library_size: usize,
    /// Number of endmembers actually present in the scene.
    #[arg(long)]
    active: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    smoothness: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Noise case, 1 through 8.
    #[arg(long)]
    case: u8,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Directory for the ground-truth noise components, if wanted.
    #[arg(long)]
    truth_dir: Option<PathBuf>,
}

#[derive(Args)]
struct UnmixArgs {
    #[arg(long)]
    input: PathBuf,
    /// Endmember library CSV (bands x endmembers).
    #[arg(long)]
    library: PathBuf,
    #[arg(long, default_value = "htv")]
    reg: String,
    #[arg(long, default_value_t = 0.05)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.05)]
    lambda2: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda3: f64,
    /// Fidelity ball radius.
    #[arg(long)]
    epsilon: f64,
    /// Sparse-noise l1 budget.
    #[arg(long)]
    eta: f64,
    #[arg(long, default_value_t = 0.05)]
    omega: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Diagnostics sampling stride (iterations).
    #[arg(long, default_value_t = 10)]
    stride: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Ground-truth abundance CSV.
    #[arg(long)]
    truth_abundance: Option<PathBuf>,
    /// Estimated abundance CSV.
    #[arg(long)]
    est_abundance: Option<PathBuf>,
    /// Ground-truth cube (for MPSNR/MSSIM).
    #[arg(long)]
    truth_cube: Option<PathBuf>,
    /// Estimated/reconstructed cube.
    #[arg(long)]
    est_cube: Option<PathBuf>,
    /// Also append the report as one CSV row to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
}

enum CliFailure {
    Usage(String),
    Runtime(String),
}

impl From<RhuidrError> for CliFailure {
    fn from(err: RhuidrError) -> Self {
        match err {
            RhuidrError::InvalidParam(_) => CliFailure::Usage(err.to_string()),
            other => CliFailure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Degrade(args) => cmd_degrade(args),
        Command::Unmix(args) => cmd_unmix(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Run(args) => cmd_run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliFailure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliFailure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliFailure> {
    let dims = Dims::new(args.n1, args.n2, args.bands, args.library_size)?;
    let seeds = derive_seeds(args.seed, 2);
    let library = gen_endmembers(args.bands, args.library_size, seeds[0])?;
    let spec = SceneSpec::new(dims, args.active, seeds[1])?.with_smoothness(args.smoothness)?;
    let abundance = gen_abundance(&spec, args.library_size)?;
    let clean = clean_scene(&library, &abundance, dims)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliFailure::Runtime(format!("cannot create {:?}: {e}", args.out_dir)))?;
    write_matrix_csv(library.data(), &args.out_dir.join("library.csv"))?;
    write_matrix_csv(abundance.data(), &args.out_dir.join("abundance_true.csv"))?;
    write_cube(&clean, &args.out_dir.join("clean.cube"))?;
    println!(
        "synth: wrote library.csv, abundance_true.csv, clean.cube to {}",
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_degrade(args: DegradeArgs) -> Result<(), CliFailure> {
    let clean = read_cube(&args.input)?;
    let scene = make_case(&clean, args.case, args.seed)?;
    write_cube(&scene.degraded, &args.out)?;
    if let Some(dir) = &args.truth_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliFailure::Runtime(format!("cannot create {dir:?}: {e}")))?;
        let dims = *clean.dims();
        let as_cube = |m: &ndarray::Array2<f64>| HSCube::from_matrix(m.clone(), dims);
        write_cube(&as_cube(&scene.gaussian)?, &dir.join("gaussian_true.cube"))?;
        write_cube(&as_cube(&scene.sparse)?, &dir.join("sparse_true.cube"))?;
        write_cube(&as_cube(&scene.stripe)?, &dir.join("stripe_true.cube"))?;
    }
    println!(
        "degrade: case {} sigma={:?} p_s={} stripes={} -> {}",
        args.case,
        scene.case.sigma,
        scene.case.p_s,
        scene.case.stripe_range.is_some(),
        args.out.display()
    );
    Ok(())
}

fn cmd_unmix(args: UnmixArgs) -> Result<(), CliFailure> {
    let mut cfg = RhuidrConfig::new(args.epsilon, args.eta);
    cfg.lambda1 = args.lambda1;
    cfg.lambda2 = args.lambda2;
    cfg.lambda3 = args.lambda3;
    cfg.regularizer = Regularizer::parse(&args.reg)?;
    cfg.omega = args.omega;
    cfg.max_iter = args.max_iter;
    cfg.tol = args.tol;
    cfg.diagnostics_stride = args.stride;
    // Flag combinations are usage errors before any file is touched.
    cfg.validate()?;

    let cube = read_cube(&args.input)?;
    let library = EndmemberLibrary::new(read_matrix_csv(&args.library)?)?;
    let result = unmix(&cube, &library, &cfg)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliFailure::Runtime(format!("cannot create {:?}: {e}", args.out_dir)))?;
    let dims = *cube.dims();
    write_matrix_csv(result.abundance.data(), &args.out_dir.join("abundance_est.csv"))?;
    let as_cube = |m: &ndarray::Array2<f64>| HSCube::from_matrix(m.clone(), dims);
    write_cube(&as_cube(&result.noise.sparse)?, &args.out_dir.join("sparse_est.cube"))?;
    write_cube(&as_cube(&result.noise.stripe)?, &args.out_dir.join("stripe_est.cube"))?;
    write_cube(&result.reconstructed, &args.out_dir.join("reconstructed.cube"))?;
    let echo = vec![("input".to_string(), args.input.display().to_string())];
    write_trace_csv(&result, &cfg, &echo, &args.out_dir.join("trace.csv"))?;
    export_abundance_pgm(&result.abundance, &dims, &args.out_dir.join("pgm"))?;
    println!(
        "unmix: {} iterations, termination={}, outputs in {}",
        result.trace.iterations,
        result.trace.termination.as_str(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), CliFailure> {
    let mut report = MetricReport::default();
    match (&args.truth_abundance, &args.est_abundance) {
        (Some(truth), Some(est)) => {
            let a_true = read_matrix_csv(truth)?;
            let a_est = read_matrix_csv(est)?;
            report.sre_db = Some(sre(&a_true, &a_est)?);
            report.rmse = Some(rmse(&a_true, &a_est)?);
            report.ps = Some(ps(&a_true, &a_est, PS_THRESHOLD)?);
        }
        (None, None) => {}
        _ => {
            return Err(CliFailure::Usage(
                "--truth-abundance and --est-abundance must be given together".into(),
            ))
        }
    }
    match (&args.truth_cube, &args.est_cube) {
        (Some(truth), Some(est)) => {
            let c_true = read_cube(truth)?;
            let c_est = read_cube(est)?;
            report.mpsnr_db = Some(mpsnr(&c_true, &c_est)?);
            report.mssim = Some(mssim(&c_true, &c_est)?);
        }
        (None, None) => {}
        _ => {
            return Err(CliFailure::Usage(
                "--truth-cube and --est-cube must be given together".into(),
            ))
        }
    }
    if report == MetricReport::default() {
        return Err(CliFailure::Usage(
            "nothing to score: give an abundance pair and/or a cube pair".into(),
        ));
    }
    println!("{}", report.to_kv_line());
    if let Some(csv) = &args.csv {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let line = format!(
            "sre_db,rmse,ps,mpsnr_db,mssim\n{},{},{},{},{}\n",
            fmt(report.sre_db),
            fmt(report.rmse),
            fmt(report.ps),
            fmt(report.mpsnr_db),
            fmt(report.mssim)
        );
        std::fs::write(csv, line)
            .map_err(|e| CliFailure::Runtime(format!("cannot write {csv:?}: {e}")))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliFailure> {
    let manifest = RunManifest::load(&args.manifest)?;
    let summary = run_manifest(&manifest)?;
    println!(
        "run: {} iterations={} termination={} epsilon={} eta={} outputs in {}",
        summary.metrics.to_kv_line(),
        summary.iterations,
        summary.termination.as_str(),
        summary.epsilon,
        summary.eta,
        summary.out_dir.display()
    );
    Ok(())
}
