//! Singular values of the permutation statistic matrix `T`: a handful of large
//! values then a flat noise floor, which is what makes low-rank recovery work.

use maxnull::naive::{run_naive, NaiveOptions};
use maxnull::simgen::{generate, SimSpec};
use maxnull::{spectrum, PermutationPlan};

fn main() -> maxnull::Result<()> {
    let sim = generate(&SimSpec { n: 20, v: 4_000, effect_mu: 1.0, sparsity: 0.01, seed: 8 })?;
    let plan = PermutationPlan::new(8, 800);
    let run = run_naive(&sim.data, &plan, NaiveOptions { materialize: true, ..Default::default() })?;
    let t = run.stats.expect("materialized").values;

    let s = spectrum(&t, 40, 8)?;
    let total: f64 = s.iter().map(|x| x * x).sum();
    let mut acc = 0.0;
    println!("index,value,cumulative_energy");
    for (i, x) in s.iter().enumerate() {
        acc += x * x;
        println!("{i},{x:.4},{:.4}", acc / total);
    }
    Ok(())
}
