//! Run reports, engine comparison, and hyperparameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Engine, RunConfig};
use crate::data::{DataMatrix, PermutationPlan, Relabeled};
use crate::error::{Error, Result};
use crate::io;
use crate::lrmc::eta_min;
use crate::metrics::{self, RiskOutcome, ThresholdRow};
use crate::naive::{run_naive, NaiveOptions, StatMatrix, DEFAULT_MEMORY_CAP};
use crate::rapid::{run_rapid, Counters, SubspaceModel, Timings};
use crate::teststat::{pvalue, reject_set, threshold_at, tstat_full, MaxNull};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_ALPHAS: [f64; 3] = [0.05, 0.01, 0.001];

/// Worker count: explicit value, else the hardware parallelism. Zero is rejected.
pub fn resolve_threads(requested: Option<usize>) -> Result<usize> {
    match requested {
        Some(0) => Err(Error::usage("--threads must be at least 1")),
        Some(t) => Ok(t),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub v: usize,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub rank: usize,
    pub ell: usize,
    pub eta: f64,
    pub eta_min: f64,
    pub samples_per_column: usize,
    pub sigma: f64,
    pub mu: f64,
    pub passes: usize,
    pub converged: bool,
    pub pass_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub alpha: f64,
    pub threshold: f64,
    pub voxels: Vec<usize>,
}

/// Everything a run produced, in a form that can be compared after the fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub engine_version: String,
    pub engine: Engine,
    pub seed: u64,
    pub config: RunConfig,
    pub data: DataSummary,
    pub counters: Counters,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSummary>,
    pub observed_max: f64,
    pub observed_pvalue: f64,
    pub rejections: Vec<Rejection>,
    /// All `L` maxima; index 0 is the observed labeling.
    pub maxima: Vec<f64>,
}

impl RunReport {
    pub fn null(&self) -> Result<MaxNull> {
        MaxNull::new(self.maxima.clone())
    }

    /// Check the evaluation-count identities of the engine that produced this report.
    pub fn check_counters(&self) -> Result<()> {
        let v = self.data.v as u64;
        let l = self.config.perms as u64;
        let ok = match self.engine {
            Engine::Naive => self.counters.full_evaluations == v * l && self.counters.recovery_evaluations == 0,
            Engine::Rapid => {
                let k = self.config.samples_per_column(self.data.v) as u64;
                let ell = self.config.ell as u64;
                self.counters.full_evaluations == v * ell && self.counters.recovery_evaluations == k * (l - ell)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("counters {:?} violate the {:?} identity", self.counters, self.engine)))
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Load { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// What to run and what to keep.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub config: RunConfig,
    /// Keep the full statistic matrix (naive engine only).
    pub materialize: bool,
    pub memory_cap: u64,
    /// Levels at which rejection sets of the observed map are recorded.
    pub alphas: Vec<f64>,
    pub source: Option<String>,
}

impl RunRequest {
    pub fn new(config: RunConfig) -> Self {
        RunRequest { config, materialize: false, memory_cap: DEFAULT_MEMORY_CAP, alphas: DEFAULT_ALPHAS.to_vec(), source: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub model: Option<SubspaceModel>,
    pub stats: Option<StatMatrix>,
}

/// Run the configured engine on `x` inside a pool of the configured width.
pub fn execute(x: &DataMatrix, req: &RunRequest) -> Result<RunOutput> {
    let cfg = &req.config;
    cfg.validate(x.voxels(), x.subjects())?;
    if req.materialize && cfg.engine != Engine::Naive {
        return Err(Error::usage("only the naive engine can materialize T"));
    }
    let pool = cfg.pool()?;
    pool.install(|| match cfg.engine {
        Engine::Naive => {
            let plan = PermutationPlan::new(cfg.seed, cfg.perms);
            let opts = NaiveOptions { sidedness: cfg.sidedness, materialize: req.materialize, memory_cap: req.memory_cap };
            let start = Instant::now();
            let run = run_naive(x, &plan, opts)?;
            let secs = start.elapsed().as_secs_f64();
            let counters = Counters { full_evaluations: run.evaluations, ..Default::default() };
            let timings = Timings { train_seconds: 0.0, recover_seconds: secs, total_seconds: secs };
            let report = build_report(x, req, &run.null, &run.observed, counters, timings, None)?;
            Ok(RunOutput { report, model: None, stats: run.stats })
        }
        Engine::Rapid => {
            let run = run_rapid(x, cfg)?;
            let m = &run.model;
            let summary = ModelSummary {
                rank: m.basis.rank(),
                ell: m.ell,
                eta: m.eta,
                eta_min: eta_min(x.voxels(), x.subjects()),
                samples_per_column: cfg.samples_per_column(x.voxels()),
                sigma: m.sigma,
                mu: m.mu,
                passes: m.passes,
                converged: m.converged,
                pass_residual: m.pass_residual,
            };
            let report = build_report(x, req, &run.null, &run.observed, run.counters, run.timings, Some(summary))?;
            Ok(RunOutput { report, model: Some(run.model), stats: None })
        }
    })
}

fn build_report(
    x: &DataMatrix,
    req: &RunRequest,
    null: &MaxNull,
    observed: &[f64],
    counters: Counters,
    timings: Timings,
    model: Option<ModelSummary>,
) -> Result<RunReport> {
    let cfg = &req.config;
    let observed_max = cfg.sidedness.column_max(observed);
    let rejections = req
        .alphas
        .iter()
        .filter_map(|&alpha| threshold_at(null, alpha).ok().map(|tau| (alpha, tau)))
        .map(|(alpha, threshold)| Rejection { alpha, threshold, voxels: reject_set(observed, threshold, cfg.sidedness) })
        .collect();
    Ok(RunReport {
        engine_version: ENGINE_VERSION.to_string(),
        engine: cfg.engine,
        seed: cfg.seed,
        config: cfg.clone(),
        data: DataSummary { v: x.voxels(), n: x.subjects(), n1: x.n1(), n2: x.n2(), source: req.source.clone() },
        counters,
        timings,
        model,
        observed_max,
        observed_pvalue: pvalue(null, observed_max),
        rejections,
        maxima: null.maxima().to_vec(),
    })
}

/// Write the learned basis as `<prefix>.mat0` and its scalars as `<prefix>.json`.
pub fn write_model(model: &SubspaceModel, prefix: impl AsRef<Path>) -> Result<()> {
    let prefix = prefix.as_ref();
    io::write_mat0(model.basis.matrix(), prefix.with_extension("mat0"))?;
    let meta = serde_json::json!({
        "rank": model.basis.rank(),
        "voxels": model.basis.voxels(),
        "sigma": model.sigma,
        "mu": model.mu,
        "ell": model.ell,
        "eta": model.eta,
        "passes": model.passes,
        "converged": model.converged,
    });
    fs::write(prefix.with_extension("json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub alpha: f64,
    #[serde(flatten)]
    pub outcome: RiskOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// `KL(reference || candidate)`.
    pub kl: f64,
    pub bins: usize,
    pub smoothing: String,
    pub candidate_engine: Engine,
    pub reference_engine: Engine,
    pub thresholds: Vec<ThresholdRow>,
    pub risks: Vec<RiskRow>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,candidate_threshold,reference_threshold,percent_difference,risk,v1,v2,common,kl\n");
        for row in &self.thresholds {
            let risk = self.risks.iter().find(|r| r.alpha == row.alpha).map(|r| r.outcome);
            let (risk, v1, v2, common) = match risk {
                Some(RiskOutcome::Risk { risk, v1, v2, common }) => (risk.to_string(), v1.to_string(), v2.to_string(), common.to_string()),
                Some(RiskOutcome::NoRejections { v1, v2 }) => (String::new(), v1.to_string(), v2.to_string(), String::new()),
                None => Default::default(),
            };
            let pct = row.percent_difference.map(|p| p.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.alpha, row.candidate, row.reference, pct, risk, v1, v2, common, self.kl
            ));
        }
        s
    }
}

/// Compare `candidate` against `reference`.
///
/// Risks use the rejection sets stored in both reports when they share a level;
/// with `data` the observed statistic map is recomputed so every level gets a risk.
pub fn compare(
    candidate: &RunReport,
    reference: &RunReport,
    alphas: &[f64],
    bins: usize,
    data: Option<&DataMatrix>,
) -> Result<CompareReport> {
    let (c, r) = (candidate.null()?, reference.null()?);
    let kl = metrics::kl_divergence(&r, &c, bins)?;
    let thresholds = metrics::threshold_table(&c, &r, alphas)?;
    let observed = match data {
        Some(x) => Some(tstat_full(&Relabeled::identity(x))?.values),
        None => None,
    };
    let sidedness = reference.config.sidedness;
    let mut risks = Vec::new();
    for row in &thresholds {
        let stored = |rep: &RunReport| rep.rejections.iter().find(|j| j.alpha == row.alpha).map(|j| j.voxels.clone());
        let sets = match (&observed, stored(candidate), stored(reference)) {
            (Some(map), _, _) => Some((reject_set(map, row.candidate, sidedness), reject_set(map, row.reference, sidedness))),
            (None, Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        if let Some((a, b)) = sets {
            risks.push(RiskRow { alpha: row.alpha, outcome: metrics::resampling_risk(&a, &b) });
        }
    }
    Ok(CompareReport {
        kl,
        bins,
        smoothing: "1/(10 L) added to each bin probability before renormalizing".into(),
        candidate_engine: candidate.engine,
        reference_engine: reference.engine,
        thresholds,
        risks,
    })
}

/// Hyperparameter grid for [`sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub perms: Vec<usize>,
    /// Sub-sampling rates as fractions.
    pub etas: Vec<f64>,
    /// Training columns.
    pub ells: Vec<usize>,
    /// Basis rank; defaults to `n`.
    #[serde(default)]
    pub rank: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub parallel_cells: bool,
}

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.01]
}

fn default_bins() -> usize {
    metrics::DEFAULT_BINS
}

/// Simulation sub-sampling rates, as fractions.
pub const SIM_ETAS: [f64; 9] = [0.005, 0.01, 0.016, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64];
/// Simulation permutation counts.
pub const SIM_PERMS: [usize; 6] = [5_000, 10_000, 20_000, 40_000, 50_000, 100_000];

impl GridConfig {
    /// The simulation grid for `n` subjects: rates 0.5%..64%, `ell` in {n/3, n, 2n},
    /// permutation counts 5k..100k multiplied by `scale`.
    pub fn simulation_default(n: usize, scale: f64, seed: u64) -> Self {
        let perms = SIM_PERMS.iter().map(|&l| ((l as f64 * scale).round() as usize).max(1)).collect();
        GridConfig {
            perms,
            etas: SIM_ETAS.to_vec(),
            ells: vec![(n / 3).max(1), n, 2 * n],
            rank: None,
            seed,
            alphas: default_alphas(),
            bins: default_bins(),
            threads: None,
            parallel_cells: false,
        }
    }

    pub fn cells(&self) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::new();
        for &l in &self.perms {
            for &eta in &self.etas {
                for &ell in &self.ells {
                    out.push((l, eta, ell));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub perms: usize,
    pub eta: f64,
    pub ell: usize,
    pub status: String,
    pub kl: Option<f64>,
    pub thresholds: Vec<ThresholdRow>,
    pub risks: Vec<RiskRow>,
    pub recovery_evaluations: Option<u64>,
    pub full_evaluations: Option<u64>,
    pub total_seconds: Option<f64>,
}

/// Summary row for one cell, computed only from the stored reports.
pub fn summarize_cell(
    cell: usize,
    (perms, eta, ell): (usize, f64, usize),
    outcome: &std::result::Result<RunReport, String>,
    reference: &RunReport,
    grid: &GridConfig,
) -> SweepRow {
    let mut row = SweepRow {
        cell,
        perms,
        eta,
        ell,
        status: "ok".into(),
        kl: None,
        thresholds: vec![],
        risks: vec![],
        recovery_evaluations: None,
        full_evaluations: None,
        total_seconds: None,
    };
    match outcome {
        Ok(rep) => match compare(rep, reference, &grid.alphas, grid.bins, None) {
            Ok(c) => {
                row.kl = Some(c.kl);
                row.thresholds = c.thresholds;
                row.risks = c.risks;
                row.recovery_evaluations = Some(rep.counters.recovery_evaluations);
                row.full_evaluations = Some(rep.counters.full_evaluations);
                row.total_seconds = Some(rep.timings.total_seconds);
            }
            Err(e) => row.status = format!("error: {e}"),
        },
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

pub fn summary_csv(rows: &[SweepRow], alphas: &[f64]) -> String {
    let mut header = vec!["cell", "perms", "eta", "ell", "status", "kl"].into_iter().map(String::from).collect::<Vec<_>>();
    for a in alphas {
        header.push(format!("tau_rapid_{a}"));
        header.push(format!("tau_naive_{a}"));
        header.push(format!("pct_diff_{a}"));
        header.push(format!("risk_{a}"));
    }
    header.extend(["recovery_evaluations", "full_evaluations", "total_seconds"].map(String::from));
    let mut s = header.join(",") + "\n";
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in rows {
        let mut f = vec![
            r.cell.to_string(),
            r.perms.to_string(),
            r.eta.to_string(),
            r.ell.to_string(),
            format!("\"{}\"", r.status.replace('"', "'")),
            opt(r.kl.map(|k| k.to_string())),
        ];
        for a in alphas {
            let t = r.thresholds.iter().find(|t| t.alpha == *a);
            f.push(opt(t.map(|t| t.candidate.to_string())));
            f.push(opt(t.map(|t| t.reference.to_string())));
            f.push(opt(t.and_then(|t| t.percent_difference).map(|p| p.to_string())));
            f.push(opt(r.risks.iter().find(|x| x.alpha == *a).and_then(|x| x.outcome.risk()).map(|x| x.to_string())));
        }
        f.push(opt(r.recovery_evaluations.map(|x| x.to_string())));
        f.push(opt(r.full_evaluations.map(|x| x.to_string())));
        f.push(opt(r.total_seconds.map(|x| x.to_string())));
        s.push_str(&(f.join(",") + "\n"));
    }
    s
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary_path: PathBuf,
}

/// Run every grid cell with the rapid engine against a naive reference per
/// permutation count (same master seed, so the permutations are shared).
/// Reports go to `out_dir/cell_<i>.json` and `out_dir/reference_L<L>.json`;
/// failed cells are recorded and the sweep continues.
pub fn sweep(x: &DataMatrix, grid: &GridConfig, out_dir: impl AsRef<Path>) -> Result<SweepResult> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let threads = resolve_threads(grid.threads)?;
    let cells = grid.cells();
    let (v, n) = (x.voxels(), x.subjects());

    let mut perms: Vec<usize> = cells.iter().map(|c| c.0).collect();
    perms.sort_unstable();
    perms.dedup();
    let mut references = std::collections::BTreeMap::new();
    for &l in &perms {
        let mut cfg = RunConfig::recommended(Engine::Naive, v, n, l, grid.seed);
        cfg.threads = Some(threads);
        let rep = execute(x, &RunRequest { alphas: grid.alphas.clone(), ..RunRequest::new(cfg) })?.report;
        rep.write(out_dir.join(format!("reference_L{l}.json")))?;
        references.insert(l, rep);
    }

    let run_cell = |(i, &(l, eta, ell)): (usize, &(usize, f64, usize))| -> std::result::Result<RunReport, String> {
        let mut cfg = RunConfig::recommended(Engine::Rapid, v, n, l, grid.seed);
        cfg.eta = eta;
        cfg.ell = ell;
        if let Some(r) = grid.rank {
            cfg.rank = r;
        }
        cfg.threads = Some(if grid.parallel_cells { 1 } else { threads });
        let rep = execute(x, &RunRequest { alphas: grid.alphas.clone(), ..RunRequest::new(cfg) })
            .map(|o| o.report)
            .map_err(|e| e.to_string())?;
        rep.write(out_dir.join(format!("cell_{i}.json"))).map_err(|e| e.to_string())?;
        Ok(rep)
    };
    let outcomes: Vec<std::result::Result<RunReport, String>> = if grid.parallel_cells {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        pool.install(|| cells.par_iter().enumerate().map(run_cell).collect())
    } else {
        cells.iter().enumerate().map(run_cell).collect()
    };
    let rows: Vec<SweepRow> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| summarize_cell(i, cells[i], o, &references[&cells[i].0], grid))
        .collect();
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, summary_csv(&rows, &grid.alphas))?;
    Ok(SweepResult { rows, summary_path })
}
