//! Accuracy measures between two max-null distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::teststat::{threshold_at, MaxNull};

pub const DEFAULT_BINS: usize = 100;

/// Two histograms on shared equal-width bins, smoothed and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPair {
    pub edges: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

fn histogram(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &x in values {
        let b = if width > 0.0 { ((x - lo) / width).floor() as isize } else { 0 };
        counts[b.clamp(0, bins as isize - 1) as usize] += 1.0;
    }
    counts
}

/// Add `eps` to every bin of `counts / total`, then renormalize.
fn smooth(counts: Vec<f64>, total: f64, eps: f64) -> Vec<f64> {
    let mut p: Vec<f64> = counts.into_iter().map(|c| c / total + eps).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

impl HistogramPair {
    /// Shared edges over the pooled range; smoothing `1 / (10 L)` per distribution.
    pub fn new(a: &MaxNull, b: &MaxNull, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::usage(format!("need at least 2 bins, got {bins}")));
        }
        let lo = a.sorted()[0].min(b.sorted()[0]);
        let hi = a.sorted()[a.len() - 1].max(b.sorted()[b.len() - 1]);
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let (la, lb) = (a.len() as f64, b.len() as f64);
        let p = smooth(histogram(a.maxima(), lo, width, bins), la, 1.0 / (10.0 * la));
        let q = smooth(histogram(b.maxima(), lo, width, bins), lb, 1.0 / (10.0 * lb));
        Ok(HistogramPair { edges, p, q })
    }

    /// `sum p ln(p / q)`.
    pub fn kl(&self) -> f64 {
        kl_of(&self.p, &self.q)
    }
}

/// KL divergence of two probability vectors.
pub fn kl_of(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// `KL(reference || candidate)` over `bins` shared bins.
pub fn kl_divergence(reference: &MaxNull, candidate: &MaxNull, bins: usize) -> Result<f64> {
    Ok(HistogramPair::new(reference, candidate, bins)?.kl())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub alpha: f64,
    pub candidate: f64,
    pub reference: f64,
    /// `100 |candidate - reference| / |reference|`; `None` when the reference threshold is 0.
    pub percent_difference: Option<f64>,
}

pub fn percent_difference(candidate: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| 100.0 * (candidate - reference).abs() / reference.abs())
}

/// Thresholds of `candidate` and `reference` at each level.
pub fn threshold_table(candidate: &MaxNull, reference: &MaxNull, alphas: &[f64]) -> Result<Vec<ThresholdRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let c = threshold_at(candidate, alpha)?;
            let r = threshold_at(reference, alpha)?;
            Ok(ThresholdRow { alpha, candidate: c, reference: r, percent_difference: percent_difference(c, r) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum RiskOutcome {
    Risk { risk: f64, v1: usize, v2: usize, common: usize },
    /// At least one procedure rejected nothing; the risk is undefined.
    NoRejections { v1: usize, v2: usize },
}

impl RiskOutcome {
    pub fn risk(&self) -> Option<f64> {
        match *self {
            RiskOutcome::Risk { risk, .. } => Some(risk),
            RiskOutcome::NoRejections { .. } => None,
        }
    }
}

/// Resampling risk from rejection counts and their overlap.
pub fn risk_from_counts(v1: usize, v2: usize, common: usize) -> Result<RiskOutcome> {
    if common > v1.min(v2) {
        return Err(Error::usage(format!("overlap {common} exceeds a rejection count ({v1}, {v2})")));
    }
    if v1 == 0 || v2 == 0 {
        return Ok(RiskOutcome::NoRejections { v1, v2 });
    }
    let risk = ((v1 - common) as f64 / v1 as f64 + (v2 - common) as f64 / v2 as f64) / 2.0;
    Ok(RiskOutcome::Risk { risk, v1, v2, common })
}

/// Resampling risk between two rejection sets (voxel indices, any order).
pub fn resampling_risk(r1: &[usize], r2: &[usize]) -> RiskOutcome {
    let a: std::collections::BTreeSet<usize> = r1.iter().copied().collect();
    let b: std::collections::BTreeSet<usize> = r2.iter().copied().collect();
    let common = a.intersection(&b).count();
    risk_from_counts(a.len(), b.len(), common).expect("intersection never exceeds either set")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_nulls_have_zero_kl() {
        let a = MaxNull::new((0..500).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        assert!(kl_divergence(&a, &a, 100).unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_bin_hand_case() {
        // p = (0.5, 0.5), q = (0.25, 0.75) with L = 10_000
        let a = MaxNull::new((0..10_000).map(|i| if i < 5000 { 0.0 } else { 1.0 }).collect()).unwrap();
        let b = MaxNull::new((0..10_000).map(|i| if i < 2500 { 0.0 } else { 1.0 }).collect()).unwrap();
        let exact = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((exact - 0.143_841).abs() < 1e-6);
        let kl = kl_divergence(&a, &b, 2).unwrap();
        assert!((kl - exact).abs() < 1e-3, "{kl}");
        assert!(kl_divergence(&a, &b, 1).is_err());
    }

    #[test]
    fn kl_of_distinct_distributions_is_positive() {
        let a = MaxNull::new((0..1000).map(|i| i as f64 / 1000.0).collect()).unwrap();
        let b = MaxNull::new((0..1000).map(|i| (i as f64 / 1000.0).powi(2)).collect()).unwrap();
        assert!(kl_divergence(&a, &b, 50).unwrap() > 0.01);
    }

    #[test]
    fn threshold_rows() {
        let a = MaxNull::new((1..=100).map(f64::from).collect()).unwrap();
        let rows = threshold_table(&a, &a, &[0.05, 0.01]).unwrap();
        assert!(rows.iter().all(|r| r.percent_difference == Some(0.0)));
        assert!((percent_difference(2.02, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(percent_difference(1.0, 0.0), None);
    }

    #[test]
    fn risk_examples() {
        let r = risk_from_counts(59, 71, 59).unwrap().risk().unwrap();
        assert!((r - 0.0845).abs() < 5e-4, "{r}");
        let r = risk_from_counts(2158, 2241, 2158).unwrap().risk().unwrap();
        assert!((r - 0.0185).abs() < 5e-4, "{r}");
        assert_eq!(resampling_risk(&[1, 2, 3], &[3, 2, 1]).risk(), Some(0.0));
        assert_eq!(resampling_risk(&[1, 2], &[3]).risk(), Some(1.0));
        assert_eq!(resampling_risk(&[], &[3]), RiskOutcome::NoRejections { v1: 0, v2: 1 });
    }
}
