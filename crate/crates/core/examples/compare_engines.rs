//! Naive versus rapid on the 30-subject, 20000-voxel simulation.
//!
//! cargo run --release --example compare_engines -- [perms] [eta-multiplier] [seed] [sup|gap] [in|cross]

use maxnull::config::{Engine, ResidualSource, RunConfig, ShiftEstimator};
use maxnull::harness::{compare, execute, RunRequest};
use maxnull::simgen::gen_sim1;

fn main() -> maxnull::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let perms: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let mult: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);

    let sim = gen_sim1(seed);
    let x = &sim.data;
    let (v, n) = (x.voxels(), x.subjects());

    let naive = execute(x, &RunRequest::new(RunConfig::recommended(Engine::Naive, v, n, perms, seed)))?.report;
    let mut cfg = RunConfig::recommended(Engine::Rapid, v, n, perms, seed);
    cfg.eta = (maxnull::eta_min(v, n) * mult).min(1.0);
    match args.get(3).map(String::as_str) {
        Some("sup") => cfg.shift = ShiftEstimator::SupResidual,
        Some("gap") => cfg.shift = ShiftEstimator::MeanMaxGap,
        _ => {}
    }
    match args.get(4).map(String::as_str) {
        Some("in") => cfg.residuals = ResidualSource::InSample,
        Some("cross") => cfg.residuals = ResidualSource::CrossFit,
        _ => {}
    }
    let rapid = execute(x, &RunRequest::new(cfg))?.report;

    let c = compare(&rapid, &naive, &[0.05, 0.01], 100, Some(x))?;
    let m = rapid.model.as_ref().expect("rapid reports carry a model");
    println!("eta {:.4}  k {}  sigma {:.4}  mu {:.4}  passes {}  residual {:.2e}", m.eta, m.samples_per_column, m.sigma, m.mu, m.passes, m.pass_residual);
    println!("KL(naive || rapid) = {:.4}", c.kl);
    for t in &c.thresholds {
        println!("alpha {:<5} rapid {:.4}  naive {:.4}  diff {:.3}%", t.alpha, t.candidate, t.reference, t.percent_difference.unwrap_or(f64::NAN));
    }
    for r in &c.risks {
        println!("alpha {:<5} risk {:?}", r.alpha, r.outcome);
    }
    let ratio = naive.counters.full_evaluations as f64 / (rapid.counters.full_evaluations + rapid.counters.recovery_evaluations) as f64;
    println!(
        "evaluations naive/rapid {:.1}   wall naive {:.2}s rapid {:.2}s (train {:.2}s)  speedup {:.1}x",
        ratio,
        naive.timings.total_seconds,
        rapid.timings.total_seconds,
        rapid.timings.train_seconds,
        naive.timings.total_seconds / rapid.timings.total_seconds
    );
    Ok(())
}
