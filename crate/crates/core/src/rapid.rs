//! Accelerated permutation testing by low-rank recovery.
//!
//! Training computes `ell` permutation columns in full, tracks an `r`-dimensional
//! basis over sub-sampled entries of those columns, and estimates the residual
//! spread `sigma` and the max shift `mu`. Recovery then computes only
//! `ceil(eta v)` statistics per remaining permutation, fits basis coefficients to
//! them, synthesizes the column as `U w + N(0, sigma^2)` and records its maximum
//! plus `mu`.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Engine, ResidualSource, RunConfig, ShiftEstimator};
use crate::data::{DataMatrix, PermutationPlan, Relabeled};
use crate::error::{Error, Result};
use crate::lrmc::{self, init_basis, Basis, ObservedColumn, StepSchedule, Tracker};
use crate::naive::permutation_column;
use crate::rng::{self, Domain};
use crate::teststat::{tstat_subset_unchecked, MaxNull, Sidedness};

/// Fresh index sets tried before an ill-conditioned draw aborts the run.
pub const MAX_RESAMPLES: usize = 5;

/// Learned model `T ≈ U W + S`, `S ~ N(0, sigma^2)`, with max shift `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    pub basis: Basis,
    pub sigma: f64,
    pub mu: f64,
    pub ell: usize,
    pub eta: f64,
    /// Tracking passes made over the training columns.
    pub passes: usize,
    pub converged: bool,
    /// Mean relative fit residual of the last pass.
    pub pass_residual: f64,
}

/// Options for [`track_basis`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions {
    pub rank: usize,
    /// Observed entries per column per update.
    pub samples: usize,
    pub max_passes: usize,
    /// Stop once the mean relative residual over a pass falls below this.
    pub tolerance: f64,
    pub seed: u64,
    /// Separates the random streams of independent trackings under one seed.
    pub stream: u64,
}

#[derive(Debug, Clone)]
pub struct TrackedBasis {
    pub basis: Basis,
    pub passes: usize,
    pub converged: bool,
    pub pass_residual: f64,
    /// Index set each column was observed on during the final pass.
    pub last_samples: Vec<Vec<usize>>,
    pub updates: u64,
}

fn stream_index(stream: u64, pass: usize, column: usize) -> u64 {
    (stream << 44) | ((pass as u64) << 24) | column as u64
}

/// Draw index sets from `rng` until the observed rows factor, at most [`MAX_RESAMPLES`] times.
fn draw_factorable<T>(
    factor: impl Fn(&[usize]) -> Result<T>,
    rng: &mut rng::StreamRng,
    v: usize,
    k: usize,
) -> Result<(Vec<usize>, T, usize)> {
    let mut last = None;
    for attempt in 0..MAX_RESAMPLES {
        let idx = rng::sample_indices(rng, v, k);
        match factor(&idx) {
            Ok(f) => return Ok((idx, f, attempt)),
            Err(e @ Error::IllConditioned { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    let cond = match last {
        Some(Error::IllConditioned { condition }) => condition,
        _ => f64::INFINITY,
    };
    Err(Error::Numerical(format!(
        "{MAX_RESAMPLES} index sets of size {k} all gave ill-conditioned rows (last condition {cond:.3e})"
    )))
}

/// Track an orthonormal basis over repeated sub-sampled passes of `columns`.
///
/// Each pass visits the columns in order; column `i` of pass `p` is observed on a
/// fresh index set and the basis takes one Grassmannian step with size
/// `1 / (1 + t / tau)`, `t = p * ell + i`, `tau = ell * max_passes / 2`.
pub fn track_basis(columns: &[Vec<f64>], opts: TrackingOptions) -> Result<TrackedBasis> {
    let ell = columns.len();
    let v = columns.first().map_or(0, Vec::len);
    if ell == 0 {
        return Err(Error::usage("tracking needs at least one column"));
    }
    if opts.samples < opts.rank || opts.samples > v {
        return Err(Error::usage(format!(
            "samples per column must satisfy r <= k <= v (k = {}, r = {}, v = {v})",
            opts.samples, opts.rank
        )));
    }
    let mut tracker = Tracker::new(init_basis(v, opts.rank, rng::derive_seed(opts.seed, Domain::Basis, opts.stream))?);
    let r = opts.rank;
    let schedule = StepSchedule::new(1.0, (ell * opts.max_passes) as f64 / 2.0);
    let mut last_samples = vec![Vec::new(); ell];
    let mut pass_residual = f64::INFINITY;
    let mut updates = 0u64;
    let mut passes = opts.max_passes;
    let mut converged = false;
    for pass in 0..opts.max_passes {
        let mut total = 0.0;
        for (i, col) in columns.iter().enumerate() {
            let mut rng = rng::stream(opts.seed, Domain::TrainSample, stream_index(opts.stream, pass, i));
            let observe = |idx: &[usize]| -> Result<(Vec<f64>, lrmc::RowFactor)> {
                let rows = tracker.observed_rows(idx);
                let f = lrmc::RowFactor::from_rows(rows.clone(), r)?;
                Ok((rows, f))
            };
            let (idx, (rows, factor), _) = if opts.samples == v {
                let idx: Vec<usize> = (0..v).collect();
                let f = observe(&idx)?;
                (idx, f, 0)
            } else {
                draw_factorable(observe, &mut rng, v, opts.samples)?
            };
            let obs = ObservedColumn::sample(col, idx)?;
            let y_norm = lrmc::norm(&obs.values);
            let res = tracker.step(&obs, &rows, &factor, schedule.step(pass * ell + i))?;
            updates += 1;
            total += if y_norm > 0.0 { res / y_norm } else { 0.0 };
            last_samples[i] = obs.indices;
        }
        pass_residual = total / ell as f64;
        if pass_residual < opts.tolerance {
            passes = pass + 1;
            converged = true;
            break;
        }
    }
    Ok(TrackedBasis { basis: tracker.into_basis(), passes, converged, pass_residual, last_samples, updates })
}

/// Training columns, the model, and bookkeeping.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: SubspaceModel,
    /// Scores `max` of each training column (unshifted).
    pub maxima: Vec<f64>,
    /// The `ell` full training columns, permutation indices `0..ell`.
    pub columns: Vec<Vec<f64>>,
    /// Recovered columns `ell..ell + pilot` used by the pilot-mean shift; reused by recovery.
    pub pilot: Vec<RecoveredColumn>,
    pub evaluations: u64,
    pub tracking_updates: u64,
}

/// Residual summary of training columns scored against some basis.
struct ResidualScores {
    /// Residual entries at the sampled voxels, all columns pooled.
    sampled: Vec<f64>,
    /// Largest residual entry per column.
    max_residual: Vec<f64>,
    /// Recovery-style fit per column: (column index, index set) for the max-gap shift.
    recovery_fits: Vec<(usize, Vec<f64>)>,
}

fn score_columns(
    basis: &Basis,
    columns: &[Vec<f64>],
    which: &[usize],
    samples_for: impl Fn(usize) -> Vec<usize>,
) -> Result<ResidualScores> {
    let mut out = ResidualScores { sampled: Vec::new(), max_residual: Vec::new(), recovery_fits: Vec::new() };
    for &i in which {
        let col = &columns[i];
        let w_full = basis.project(col);
        let fitted = basis.complete_column(&w_full);
        let resid: Vec<f64> = col.iter().zip(&fitted).map(|(t, f)| t - f).collect();
        let idx = samples_for(i);
        out.sampled.extend(idx.iter().map(|&j| resid[j]));
        out.max_residual.push(resid.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let obs = ObservedColumn::sample(col, idx)?;
        out.recovery_fits.push((i, basis.fit_coefficients(&obs)?));
    }
    Ok(out)
}

/// Mean-subtracted sample standard deviation.
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// `max_j score(U_j w + sigma z_j)` with `z` drawn from `rng`.
fn synthesized_max(basis: &Basis, w: &[f64], sigma: f64, sidedness: Sidedness, rng: &mut rng::NoiseRng) -> f64 {
    noisy_max(&basis.complete_column(w), sigma, sidedness, rng)
}

/// `max_j score(p_j + sigma z_j)`.
fn noisy_max(p: &[f64], sigma: f64, sidedness: Sidedness, rng: &mut rng::NoiseRng) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &pj in p {
        let z: f64 = StandardNormal.sample(rng);
        best = best.max(sidedness.score(pj + sigma * z));
    }
    best
}

/// Training phase: full columns for permutations `0..ell`, basis tracking, `sigma` and `mu`.
pub fn train(x: &DataMatrix, cfg: &RunConfig) -> Result<Training> {
    let (v, n) = (x.voxels(), x.subjects());
    cfg.validate(v, n)?;
    let plan = PermutationPlan::new(cfg.seed, cfg.perms);
    let ell = cfg.ell;
    let columns: Vec<Vec<f64>> = (0..ell)
        .into_par_iter()
        .map(|i| permutation_column(x, &plan, i))
        .collect::<Result<_>>()?;
    let maxima: Vec<f64> = columns.iter().map(|c| cfg.sidedness.column_max(c)).collect();
    let k = cfg.samples_per_column(v);
    let opts = TrackingOptions {
        rank: cfg.rank,
        samples: k,
        max_passes: cfg.max_passes,
        tolerance: cfg.tolerance,
        seed: cfg.seed,
        stream: 0,
    };
    let tracked = track_basis(&columns, opts)?;
    let mut updates = tracked.updates;

    let all: Vec<usize> = (0..ell).collect();
    let held_out_sample = |i: usize| {
        rng::sample_indices(&mut rng::stream(cfg.seed, Domain::CrossFit, (1 << 40) | i as u64), v, k)
    };
    // (sigma, per-column max residual, recovery-style fits against the scoring basis)
    let mut scored: Vec<(Basis, ResidualScores)> = Vec::new();
    let folds = cfg.folds.min(ell);
    if cfg.residuals == ResidualSource::CrossFit && folds >= 2 {
        let fold_results: Vec<(Basis, ResidualScores, u64)> = (0..folds)
            .into_par_iter()
            .map(|f| -> Result<_> {
                let (held, kept): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| i % folds == f);
                let train_cols: Vec<Vec<f64>> = kept.iter().map(|&i| columns[i].clone()).collect();
                let t = track_basis(&train_cols, TrackingOptions { stream: f as u64 + 1, ..opts })?;
                let s = score_columns(&t.basis, &columns, &held, held_out_sample)?;
                Ok((t.basis, s, t.updates))
            })
            .collect::<Result<_>>()?;
        for (b, s, u) in fold_results {
            updates += u;
            scored.push((b, s));
        }
    } else {
        let s = score_columns(&tracked.basis, &columns, &all, |i| tracked.last_samples[i].clone())?;
        scored.push((tracked.basis.clone(), s));
    }

    let sampled: Vec<f64> = scored.iter().flat_map(|(_, s)| s.sampled.iter().copied()).collect();
    let sigma = sample_std(&sampled);
    let mu = match cfg.shift {
        ShiftEstimator::SupResidual => scored
            .iter()
            .flat_map(|(_, s)| s.max_residual.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max),
        ShiftEstimator::MeanMaxGap => {
            let maxima = &maxima;
            let gaps: Vec<f64> = scored
                .iter()
                .flat_map(|(b, s)| {
                    s.recovery_fits.iter().map(move |(i, w)| {
                        let mut rng = rng::noise_stream(cfg.seed, Domain::CrossFit, *i as u64);
                        maxima[*i] - synthesized_max(b, w, sigma, cfg.sidedness, &mut rng)
                    })
                })
                .collect();
            gaps.iter().sum::<f64>() / gaps.len() as f64
        }
        ShiftEstimator::PilotMean => 0.0,
    };

    let mut model = SubspaceModel {
        basis: tracked.basis,
        sigma,
        mu,
        ell,
        eta: cfg.eta,
        passes: tracked.passes,
        converged: tracked.converged,
        pass_residual: tracked.pass_residual,
    };
    let mut pilot = Vec::new();
    if cfg.shift == ShiftEstimator::PilotMean {
        let end = (ell + cfg.pilot).min(cfg.perms);
        pilot = recover_range(x, &model, &plan, cfg, ell..end)?;
        if !pilot.is_empty() {
            let mean_pilot = pilot.iter().map(|c| c.unshifted_max).sum::<f64>() / pilot.len() as f64;
            model.mu = maxima.iter().sum::<f64>() / ell as f64 - mean_pilot;
        }
    }
    Ok(Training { model, maxima, columns, pilot, evaluations: (v * ell) as u64, tracking_updates: updates })
}

/// One recovered permutation column.
#[derive(Debug, Clone)]
pub struct RecoveredColumn {
    pub index: usize,
    pub observed: ObservedColumn,
    pub coefficients: Vec<f64>,
    /// `max(U w + s)` before the shift is added.
    pub unshifted_max: f64,
    pub resamples: usize,
}

/// Recover permutation `index`: sample, fit, synthesize, take the maximum.
pub fn recover_column(
    x: &DataMatrix,
    model: &SubspaceModel,
    plan: &PermutationPlan,
    cfg: &RunConfig,
    index: usize,
) -> Result<RecoveredColumn> {
    Ok(recover_batch(x, model, plan, cfg, index..index + 1)?.pop().expect("one column"))
}

/// Permutations recovered together; the basis is streamed once per batch.
pub const RECOVERY_BATCH: usize = 32;

/// Recover a contiguous range of permutations.
pub fn recover_batch(
    x: &DataMatrix,
    model: &SubspaceModel,
    plan: &PermutationPlan,
    cfg: &RunConfig,
    indices: std::ops::Range<usize>,
) -> Result<Vec<RecoveredColumn>> {
    let (v, r) = (x.voxels(), model.basis.rank());
    let k = cfg.samples_per_column(v);
    let mut fitted = Vec::with_capacity(indices.len());
    for index in indices {
        let order = plan.order(index, x.subjects())?;
        let rel = Relabeled { data: x, order };
        let mut rng = rng::stream(cfg.seed, Domain::RecoverSample, index as u64);
        let (idx, factor, resamples) = if k == v {
            let idx: Vec<usize> = (0..v).collect();
            let f = model.basis.factor_rows(&idx)?;
            (idx, f, 0)
        } else {
            draw_factorable(|idx| model.basis.factor_rows(idx), &mut rng, v, k)?
        };
        let values = tstat_subset_unchecked(&rel, &idx)?;
        let coefficients = factor.solve(&values);
        fitted.push((index, ObservedColumn { indices: idx, values }, coefficients, resamples));
    }
    let b = fitted.len();
    let w: Vec<f64> = fitted.iter().flat_map(|f| f.2.iter().copied()).collect();
    // P = U W, column-major v x b
    let mut p = vec![0.0; v * b];
    unsafe {
        matrixmultiply::dgemm(
            v, r, b, 1.0,
            model.basis.matrix().as_slice().as_ptr(), r as isize, 1,
            w.as_ptr(), 1, r as isize,
            0.0, p.as_mut_ptr(), 1, v as isize,
        );
    }
    Ok(fitted
        .into_iter()
        .zip(p.chunks_exact(v))
        .map(|((index, observed, coefficients, resamples), pc)| {
            let mut noise = rng::noise_stream(cfg.seed, Domain::Residual, index as u64);
            let unshifted_max = noisy_max(pc, model.sigma, cfg.sidedness, &mut noise);
            RecoveredColumn { index, observed, coefficients, unshifted_max, resamples }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct Recovery {
    /// Shifted maxima for permutations `ell..L`.
    pub maxima: Vec<f64>,
    pub evaluations: u64,
    pub resamples: u64,
}

/// Recover `range` in batches of [`RECOVERY_BATCH`] aligned at `model.ell`,
/// parallel over batches. Unshifted.
pub fn recover_range(
    x: &DataMatrix,
    model: &SubspaceModel,
    plan: &PermutationPlan,
    cfg: &RunConfig,
    range: std::ops::Range<usize>,
) -> Result<Vec<RecoveredColumn>> {
    if range.start < model.ell || range.end > plan.count {
        return Err(Error::usage("recovery range must lie within ell..L"));
    }
    let first = model.ell + (range.start - model.ell) / RECOVERY_BATCH * RECOVERY_BATCH;
    let starts: Vec<usize> = (first..range.end).step_by(RECOVERY_BATCH).collect();
    let batches: Vec<Vec<RecoveredColumn>> = starts
        .into_par_iter()
        .map(|s| recover_batch(x, model, plan, cfg, s.max(range.start)..(s + RECOVERY_BATCH).min(range.end)))
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Recovery phase over permutations `ell..L`.
pub fn recover(x: &DataMatrix, model: &SubspaceModel, plan: &PermutationPlan, cfg: &RunConfig) -> Result<Recovery> {
    if model.ell > plan.count {
        return Err(Error::usage("model was trained on more columns than the plan holds"));
    }
    finish_recovery(x, model, plan, cfg, Vec::new())
}

fn finish_recovery(
    x: &DataMatrix,
    model: &SubspaceModel,
    plan: &PermutationPlan,
    cfg: &RunConfig,
    done: Vec<RecoveredColumn>,
) -> Result<Recovery> {
    let k = cfg.samples_per_column(x.voxels()) as u64;
    let start = model.ell + done.len();
    let rest = recover_range(x, model, plan, cfg, start..plan.count)?;
    let cols: Vec<RecoveredColumn> = done.into_iter().chain(rest).collect();
    Ok(Recovery {
        maxima: cols.iter().map(|c| c.unshifted_max + model.mu).collect(),
        evaluations: k * cols.len() as u64,
        resamples: cols.iter().map(|c| c.resamples as u64).sum(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    /// Statistics computed for fully evaluated columns (`v * ell`, or `v * L` for naive).
    pub full_evaluations: u64,
    /// Statistics computed in the recovery phase, `ceil(eta v) * (L - ell)`.
    pub recovery_evaluations: u64,
    pub tracking_updates: u64,
    pub resamples: u64,
}

impl Counters {
    pub fn total_evaluations(&self) -> u64 {
        self.full_evaluations + self.recovery_evaluations
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train_seconds: f64,
    pub recover_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RapidRun {
    pub null: MaxNull,
    pub model: SubspaceModel,
    pub counters: Counters,
    pub timings: Timings,
    /// Statistic map of the observed labeling (training column 0).
    pub observed: Vec<f64>,
}

/// Train then recover with one permutation plan.
pub fn run_rapid(x: &DataMatrix, cfg: &RunConfig) -> Result<RapidRun> {
    if cfg.engine != Engine::Rapid {
        return Err(Error::usage("run_rapid needs engine = rapid"));
    }
    let start = Instant::now();
    let training = train(x, cfg)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let plan = PermutationPlan::new(cfg.seed, cfg.perms);
    let t1 = Instant::now();
    let recovery = finish_recovery(x, &training.model, &plan, cfg, training.pilot)?;
    let recover_seconds = t1.elapsed().as_secs_f64();
    let mut maxima = training.maxima;
    maxima.extend(recovery.maxima);
    let counters = Counters {
        full_evaluations: training.evaluations,
        recovery_evaluations: recovery.evaluations,
        tracking_updates: training.tracking_updates,
        resamples: recovery.resamples,
    };
    let observed = training.columns.into_iter().next().expect("ell >= 1");
    Ok(RapidRun {
        null: MaxNull::new(maxima)?,
        model: training.model,
        counters,
        timings: Timings { train_seconds, recover_seconds, total_seconds: start.elapsed().as_secs_f64() },
        observed,
    })
}
