//! Grassmannian tracking on an exactly low-rank matrix: learn the column space
//! from 40 of 5000 entries per column, then complete unseen columns.

use maxnull::lrmc::{init_basis, ObservedColumn};
use maxnull::rapid::{track_basis, TrackingOptions};
use maxnull::rng::{self, Domain};
use rand_distr::{Distribution, StandardNormal};

fn main() -> maxnull::Result<()> {
    let (v, r, k) = (5_000, 10, 40);
    let truth = init_basis(v, r, 1)?;
    let mut g = rng::stream(2, Domain::Simulation, 0);
    let mut column = || -> Vec<f64> {
        let w: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut g)).collect();
        truth.complete_column(&w)
    };
    let train: Vec<Vec<f64>> = (0..500).map(|_| column()).collect();

    let opts = TrackingOptions { rank: r, samples: k, max_passes: 400, tolerance: 1e-12, seed: 3, stream: 0 };
    let tracked = track_basis(&train, opts)?;
    println!(
        "{} passes ({} updates), final pass residual {:.2e}, drift {:.2e}",
        tracked.passes,
        tracked.updates,
        tracked.pass_residual,
        tracked.basis.drift()
    );

    let mut worst = 0.0f64;
    for i in 0..100 {
        let y = column();
        let idx = rng::sample_indices(&mut rng::stream(4, Domain::RecoverSample, i), v, k);
        let w = tracked.basis.fit_coefficients(&ObservedColumn::sample(&y, idx)?)?;
        let yhat = tracked.basis.complete_column(&w);
        let err: f64 = yhat.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(err / scale);
    }
    println!("100 fresh columns completed from {k} entries each: worst relative error {worst:.2e}");
    Ok(())
}
