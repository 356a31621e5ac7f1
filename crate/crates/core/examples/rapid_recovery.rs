//! The rapid engine end to end: train on a few full permutations, recover the
//! rest from about 3% of the statistics each, and look at the evaluation counts.

use maxnull::config::{Engine, RunConfig};
use maxnull::rapid::run_rapid;
use maxnull::simgen::gen_sim1;
use maxnull::{eta_min, threshold_at};

fn main() -> maxnull::Result<()> {
    let sim = gen_sim1(5);
    let x = &sim.data;
    let (v, n) = (x.voxels(), x.subjects());
    let cfg = RunConfig::recommended(Engine::Rapid, v, n, 5_000, 5);
    println!(
        "v = {v}, n = {n}: eta_min = {:.4}, using eta = {:.4} ({} statistics per recovered permutation)",
        eta_min(v, n),
        cfg.eta,
        cfg.samples_per_column(v)
    );

    let run = run_rapid(x, &cfg)?;
    let m = &run.model;
    println!(
        "trained rank-{} basis on {} columns: {} passes, residual {:.3}, sigma {:.3}, mu {:.3}",
        m.basis.rank(),
        m.ell,
        m.passes,
        m.pass_residual,
        m.sigma,
        m.mu
    );
    let c = &run.counters;
    println!(
        "evaluations: {} full + {} sampled = {} (exhaustive would be {})",
        c.full_evaluations,
        c.recovery_evaluations,
        c.total_evaluations(),
        v * cfg.perms
    );
    println!(
        "train {:.2}s, recover {:.2}s; threshold at 0.05 = {:.3}",
        run.timings.train_seconds,
        run.timings.recover_seconds,
        threshold_at(&run.null, 0.05)?
    );
    Ok(())
}
