use maxnull::config::{Engine, RunConfig};
use maxnull::metrics::kl_divergence;
use maxnull::naive::permutation_column;
use maxnull::rapid::{recover_range, run_rapid, train};
use maxnull::simgen::gen_sim1;
use maxnull::metrics::DEFAULT_BINS;
use maxnull::{run_naive, NaiveOptions, PermutationPlan, Sidedness};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len().is_multiple_of(2) { 0.5 * (xs[m - 1] + xs[m]) } else { xs[m] }
}

#[test]
fn recovered_maxima_sit_below_true_maxima_before_the_shift() {
    let sim = gen_sim1(3);
    let x = &sim.data;
    let mut cfg = RunConfig::recommended(Engine::Rapid, x.voxels(), x.subjects(), 30 + 150, 3);
    cfg.pilot = 0;
    let model = train(x, &cfg).unwrap().model;
    let plan = PermutationPlan::new(cfg.seed, cfg.perms);
    let held_out = recover_range(x, &model, &plan, &cfg, model.ell..cfg.perms).unwrap();
    assert!(held_out.len() >= 100);
    let recovered: Vec<f64> = held_out.iter().map(|c| c.unshifted_max).collect();
    let truth: Vec<f64> = held_out
        .iter()
        .map(|c| Sidedness::OneSided.column_max(&permutation_column(x, &plan, c.index).unwrap()))
        .collect();
    let (r, t) = (median(recovered), median(truth));
    assert!(r <= t, "median recovered {r} above median true {t}");
}

#[test]
#[ignore = "fails: extra samples lower sigma and narrow the recovered spread (KL 0.081 -> 0.125 on this seed)"]
fn more_samples_do_not_hurt_fidelity() {
    let sim = gen_sim1(4);
    let x = &sim.data;
    let perms = 4_000;
    let naive = run_naive(x, &PermutationPlan::new(4, perms), NaiveOptions::default()).unwrap();
    let base = RunConfig::recommended(Engine::Rapid, x.voxels(), x.subjects(), perms, 4);
    let kl_at = |scale: f64| {
        let cfg = RunConfig { eta: base.eta * scale, ..base.clone() };
        kl_divergence(&naive.null, &run_rapid(x, &cfg).unwrap().null, DEFAULT_BINS).unwrap()
    };
    let (two, four) = (kl_at(1.0), kl_at(2.0));
    assert!(four <= two + 0.01, "KL {four} at 4 eta_min against {two} at 2 eta_min");
}
