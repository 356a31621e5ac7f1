use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use maxnull::config::{Engine, ResidualSource, RunConfig, ShiftEstimator};
use maxnull::harness::{self, GridConfig, RunReport, RunRequest};
use maxnull::naive::{run_naive, NaiveOptions};
use maxnull::simgen::{self, SimSpec};
use maxnull::{eta_min, io, spectrum, DataMatrix, Error, PermutationPlan, Result, Sidedness};

#[derive(Parser)]
#[command(name = "maxnull", version, about = "Max-null permutation testing, exhaustive or by low-rank recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset and its manifest.
    Gen(GenArgs),
    /// Run one engine and write a JSON report.
    Run(RunArgs),
    /// Run a grid of rapid configurations against naive references.
    Sweep(SweepArgs),
    /// Compare two reports (KL, thresholds, resampling risk).
    Compare(CompareArgs),
    /// Singular values of the permutation statistic matrix, as CSV.
    Spectrum(SpectrumArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Sim1,
    Sim2,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: SimKind,
    #[arg(long)]
    out: PathBuf,
    /// Manifest path; defaults to the output path with a `.json` extension.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 20_000)]
    v: usize,
    #[arg(long, default_value_t = 1.0)]
    effect: f64,
    #[arg(long, default_value_t = 0.01)]
    sparsity: f64,
}

#[derive(Args)]
struct DataArgs {
    /// Input matrix (`.mat0` or `.csv`).
    #[arg(long)]
    data: PathBuf,
    /// Group-1 size for `.mat0` input; defaults to n / 2.
    #[arg(long)]
    n1: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Naive,
    Rapid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShiftArg {
    SupResidual,
    MeanMaxGap,
    PilotMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResidualArg {
    InSample,
    CrossFit,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Run configuration as JSON (a report's `config` also works); replaces the engine flags.
    #[arg(long, conflicts_with_all = ["engine", "perms", "eta", "ell", "rank", "seed", "two_sided", "shift", "residuals"])]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long)]
    perms: Option<usize>,
    /// Sub-sampling rate; default 2 eta_min.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    two_sided: bool,
    #[arg(long, value_enum)]
    shift: Option<ShiftArg>,
    #[arg(long, value_enum)]
    residuals: Option<ResidualArg>,
    #[arg(long, env = "RAPIDMAXNULL_THREADS")]
    threads: Option<usize>,
    /// Levels whose rejection sets are stored in the report.
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = harness::DEFAULT_ALPHAS)]
    alphas: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Write the full statistic matrix (naive engine).
    #[arg(long = "dump-T")]
    dump_t: Option<PathBuf>,
    /// Write the learned basis to `<prefix>.mat0` and its scalars to `<prefix>.json` (rapid engine).
    #[arg(long)]
    dump_model: Option<PathBuf>,
    /// Memory cap in bytes for `--dump-T`.
    #[arg(long, default_value_t = maxnull::naive::DEFAULT_MEMORY_CAP)]
    memory_cap: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Grid as JSON; without it the simulation grid is used.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Multiplier on the default grid's permutation counts.
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, env = "RAPIDMAXNULL_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    parallel_cells: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Candidate report.
    #[arg(long)]
    a: PathBuf,
    /// Reference report.
    #[arg(long)]
    b: PathBuf,
    /// Data matrix, to compute resampling risk at every level.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = [0.05, 0.01])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = maxnull::metrics::DEFAULT_BINS)]
    bins: usize,
    /// JSON output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1000)]
    perms: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of singular values.
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "RAPIDMAXNULL_THREADS")]
    threads: Option<usize>,
    #[arg(long, default_value_t = maxnull::naive::DEFAULT_MEMORY_CAP)]
    memory_cap: u64,
}

fn load(d: &DataArgs) -> Result<DataMatrix> {
    io::read_matrix(&d.data, d.n1)
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = match a.kind {
        SimKind::Sim1 => SimSpec::sim1(a.seed),
        SimKind::Sim2 => SimSpec { n: a.n, v: a.v, effect_mu: a.effect, sparsity: a.sparsity, seed: a.seed },
    };
    for w in spec.grid_warnings().iter().filter(|_| matches!(a.kind, SimKind::Sim2)) {
        eprintln!("warning: {w}");
    }
    let sim = simgen::generate(&spec)?;
    io::write_matrix(&sim.data, &a.out)?;
    let manifest = a.manifest.unwrap_or_else(|| a.out.with_extension("json"));
    fs::write(manifest, serde_json::to_vec_pretty(&sim.manifest())?)?;
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let x = load(&a.data)?;
    let (v, n) = (x.voxels(), x.subjects());
    let mut cfg = match &a.config {
        Some(path) => read_config(path)?,
        None => {
            let engine = match a.engine {
                Some(EngineArg::Rapid) => Engine::Rapid,
                Some(EngineArg::Naive) => Engine::Naive,
                None => return Err(Error::usage("--engine is required without --config")),
            };
            let perms = a.perms.ok_or_else(|| Error::usage("--perms is required without --config"))?;
            let mut cfg = RunConfig::recommended(engine, v, n, perms, a.seed.unwrap_or(0));
            if let Some(eta) = a.eta {
                cfg.eta = eta;
            }
            if let Some(ell) = a.ell {
                cfg.ell = ell;
            }
            if let Some(rank) = a.rank {
                cfg.rank = rank;
            }
            if a.two_sided {
                cfg.sidedness = Sidedness::TwoSided;
            }
            if let Some(s) = a.shift {
                cfg.shift = match s {
                    ShiftArg::SupResidual => ShiftEstimator::SupResidual,
                    ShiftArg::MeanMaxGap => ShiftEstimator::MeanMaxGap,
                    ShiftArg::PilotMean => ShiftEstimator::PilotMean,
                };
            }
            if let Some(r) = a.residuals {
                cfg.residuals = match r {
                    ResidualArg::InSample => ResidualSource::InSample,
                    ResidualArg::CrossFit => ResidualSource::CrossFit,
                };
            }
            cfg
        }
    };
    if a.threads.is_some() {
        cfg.threads = Some(harness::resolve_threads(a.threads)?);
    }
    if a.dump_t.is_some() && cfg.engine != Engine::Naive {
        return Err(Error::usage("--dump-T needs --engine naive"));
    }
    if a.dump_model.is_some() && cfg.engine != Engine::Rapid {
        return Err(Error::usage("--dump-model needs --engine rapid"));
    }
    if cfg.engine == Engine::Rapid && cfg.eta < eta_min(v, n) {
        eprintln!("warning: eta = {} is below eta_min = {:.5}; recovery is likely to fail", cfg.eta, eta_min(v, n));
    }
    let req = RunRequest {
        config: cfg,
        materialize: a.dump_t.is_some(),
        memory_cap: a.memory_cap,
        alphas: a.alphas,
        source: Some(a.data.data.display().to_string()),
    };
    let out = harness::execute(&x, &req)?;
    out.report.write(&a.out)?;
    if let (Some(path), Some(t)) = (&a.dump_t, &out.stats) {
        io::write_mat0(&t.values, path)?;
    }
    if let (Some(prefix), Some(model)) = (&a.dump_model, &out.model) {
        harness::write_model(model, prefix)?;
    }
    let r = &out.report;
    eprintln!(
        "{:?}: L = {}, observed max {:.4} (p = {:.4}), {} full + {} sampled evaluations, {:.2}s",
        r.engine,
        r.maxima.len(),
        r.observed_max,
        r.observed_pvalue,
        r.counters.full_evaluations,
        r.counters.recovery_evaluations,
        r.timings.total_seconds
    );
    Ok(())
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let bytes = fs::read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Load { path: path.to_path_buf(), message: e.to_string() })?;
    let cfg = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(cfg).map_err(|e| Error::Load { path: path.to_path_buf(), message: e.to_string() })
}

fn sweep(a: SweepArgs) -> Result<()> {
    let x = load(&a.data)?;
    let mut grid = match &a.grid {
        Some(path) => {
            let bytes = fs::read(path)?;
            serde_json::from_slice::<GridConfig>(&bytes)
                .map_err(|e| Error::Load { path: path.clone(), message: e.to_string() })?
        }
        None => GridConfig::simulation_default(x.subjects(), a.scale, a.seed),
    };
    if a.threads.is_some() {
        grid.threads = a.threads;
    }
    grid.parallel_cells |= a.parallel_cells;
    let res = harness::sweep(&x, &grid, &a.out_dir)?;
    let failed = res.rows.iter().filter(|r| r.status != "ok").count();
    eprintln!("{} cells, {} failed; summary at {}", res.rows.len(), failed, res.summary_path.display());
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let ra = RunReport::read(&a.a)?;
    let rb = RunReport::read(&a.b)?;
    let x = match &a.data {
        Some(p) => Some(io::read_matrix(p, a.n1)?),
        None => None,
    };
    let c = harness::compare(&ra, &rb, &a.alphas, a.bins, x.as_ref())?;
    let json = serde_json::to_string_pretty(&c)?;
    match &a.out {
        Some(p) => fs::write(p, json)?,
        None => println!("{json}"),
    }
    if let Some(p) = &a.csv {
        fs::write(p, c.to_csv())?;
    }
    Ok(())
}

fn spectrum_cmd(a: SpectrumArgs) -> Result<()> {
    let x = load(&a.data)?;
    let threads = harness::resolve_threads(a.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let plan = PermutationPlan::new(a.seed, a.perms);
    let opts = NaiveOptions { materialize: true, memory_cap: a.memory_cap, ..Default::default() };
    let run = pool.install(|| run_naive(&x, &plan, opts))?;
    let t = run.stats.expect("materialized");
    let s = spectrum(&t.values, a.k, a.seed)?;
    let mut csv = String::from("index,value\n");
    for (i, x) in s.iter().enumerate() {
        csv.push_str(&format!("{i},{x:?}\n"));
    }
    fs::write(&a.out, csv)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
        Command::Spectrum(a) => spectrum_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
