mod common;

use maxnull::rng::{self, Domain};
use maxnull::{run_naive, DataMatrix, NaiveOptions, PermutationPlan};
use rand_distr::{Distribution, StandardNormal};

#[test]
fn naive_maxima_equal_brute_force() {
    for seed in [1u64, 42, 2024] {
        let mut g = rng::stream(seed, Domain::Simulation, 0);
        let x = DataMatrix::from_fn(50, 6, 3, |_, _| StandardNormal.sample(&mut g)).unwrap();
        let run = run_naive(&x, &PermutationPlan::new(seed, 200), NaiveOptions::default()).unwrap();
        assert_eq!(run.null.maxima(), &common::brute_force_maxima(&x, seed, 200)[..]);
    }
}

#[test]
fn brute_force_on_unbalanced_groups() {
    let mut g = rng::stream(7, Domain::Simulation, 0);
    let x = DataMatrix::from_fn(30, 9, 4, |_, _| { let z: f64 = StandardNormal.sample(&mut g); 3.0 * z + 1.0 }).unwrap();
    let run = run_naive(&x, &PermutationPlan::new(7, 100), NaiveOptions::default()).unwrap();
    assert_eq!(run.null.maxima(), &common::brute_force_maxima(&x, 7, 100)[..]);
}
