#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use maxnull::DataMatrix;
use proptest::prelude::*;

/// A fresh path under the system temp directory, unique within this process.
pub fn temp_path(name: &str) -> PathBuf {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!("maxnull-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{}-{name}", NEXT.fetch_add(1, Ordering::Relaxed)))
}

/// Random data matrices with `2 <= n1, n2` and values of mixed magnitude.
pub fn data_matrix(max_v: usize, max_group: usize) -> impl Strategy<Value = DataMatrix> {
    (1..=max_v, 2..=max_group, 2..=max_group).prop_flat_map(|(v, n1, n2)| {
        let n = n1 + n2;
        proptest::collection::vec(-1e3f64..1e3, v * n)
            .prop_map(move |values| DataMatrix::new(values, v, n, n1).unwrap())
    })
}

/// Random data with equal group sizes.
pub fn balanced_matrix(max_v: usize, max_group: usize) -> impl Strategy<Value = DataMatrix> {
    (1..=max_v, 2..=max_group).prop_flat_map(|(v, g)| {
        proptest::collection::vec(-50f64..50.0, v * 2 * g)
            .prop_map(move |values| DataMatrix::new(values, v, 2 * g, g).unwrap())
    })
}

/// Max null of the observed labeling plus `perms - 1` shuffles, computed
/// independently of the engines: each shuffle is a Fisher–Yates pass driven by
/// `stream(seed, Permute, i)` and each statistic is Welch's t written out directly.
pub fn brute_force_maxima(x: &DataMatrix, seed: u64, perms: usize) -> Vec<f64> {
    use rand::Rng;
    let (v, n, n1) = (x.voxels(), x.subjects(), x.n1());
    (0..perms)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).collect();
            if i > 0 {
                let mut g = maxnull::rng::stream(seed, maxnull::rng::Domain::Permute, i as u64);
                for a in (1..n).rev() {
                    let b = g.gen_range(0..=a);
                    order.swap(a, b);
                }
            }
            let mut best = f64::NEG_INFINITY;
            for voxel in 0..v {
                let pick = |cols: &[usize]| -> (f64, f64) {
                    let vals: Vec<f64> = cols.iter().map(|&c| x.get(voxel, c)).collect();
                    let k = vals.len() as f64;
                    let mut sum = 0.0;
                    for &y in &vals {
                        sum += y;
                    }
                    let mean = sum / k;
                    let mut ss = 0.0;
                    for &y in &vals {
                        ss += (y - mean) * (y - mean);
                    }
                    (mean, ss / (k - 1.0))
                };
                let (m1, s1) = pick(&order[..n1]);
                let (m2, s2) = pick(&order[n1..]);
                let t = (m1 - m2) / (s1 / n1 as f64 + s2 / (n - n1) as f64).sqrt();
                best = best.max(t);
            }
            best
        })
        .collect()
}
