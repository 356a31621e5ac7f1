//! Voxel-wise two-sample statistics and queries on the max-null distribution.

use serde::{Deserialize, Serialize};

use crate::data::Relabeled;
use crate::error::{Error, Result};

/// Whether the max null takes the signed maximum or the maximum of |t|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    OneSided,
    TwoSided,
}

impl Sidedness {
    #[inline]
    pub fn score(self, t: f64) -> f64 {
        match self {
            Sidedness::OneSided => t,
            Sidedness::TwoSided => t.abs(),
        }
    }

    /// Maximum score over a column. Panics on an empty slice.
    pub fn column_max(self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&t| self.score(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// All `v` statistics for one labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct StatColumn {
    pub values: Vec<f64>,
    pub permutation_index: usize,
}

#[inline]
fn mean_var(row: &[f64], cols: &[usize]) -> (f64, f64) {
    let k = cols.len() as f64;
    let mut sum = 0.0;
    for &j in cols {
        sum += row[j];
    }
    let mean = sum / k;
    let mut ss = 0.0;
    for &j in cols {
        let d = row[j] - mean;
        ss += d * d;
    }
    (mean, ss / (k - 1.0))
}

/// Welch two-sample t for one voxel row.
///
/// `t = (m1 - m2) / sqrt(s1^2/n1 + s2^2/n2)` with unbiased variances. A voxel with
/// zero variance in both groups gives `0` when the means agree; otherwise the
/// statistic is unbounded and the voxel is reported.
#[inline]
pub fn tstat_row(row: &[f64], g1: &[usize], g2: &[usize], voxel: usize) -> Result<f64> {
    let (m1, v1) = mean_var(row, g1);
    let (m2, v2) = mean_var(row, g2);
    let se2 = v1 / g1.len() as f64 + v2 / g2.len() as f64;
    if se2 > 0.0 {
        Ok((m1 - m2) / se2.sqrt())
    } else if m1 == m2 {
        Ok(0.0)
    } else {
        Err(Error::DegenerateVoxel { voxel })
    }
}

/// Statistics for every voxel under a labeling.
pub fn tstat_full(x: &Relabeled<'_>) -> Result<StatColumn> {
    let (g1, g2) = (x.group1(), x.group2());
    let values = (0..x.data.voxels())
        .map(|i| tstat_row(x.data.row(i), g1, g2, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(StatColumn { values, permutation_index: 0 })
}

/// Statistics for a subset of voxels. Same kernel as [`tstat_full`], so the
/// result equals the restriction of the full column bit for bit.
pub fn tstat_subset(x: &Relabeled<'_>, voxels: &[usize]) -> Result<Vec<f64>> {
    let v = x.data.voxels();
    let mut seen = vec![false; v];
    for &i in voxels {
        if i >= v {
            return Err(Error::usage(format!("voxel index {i} out of range (v = {v})")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::usage(format!("duplicate voxel index {i}")));
        }
    }
    tstat_subset_unchecked(x, voxels)
}

pub(crate) fn tstat_subset_unchecked(x: &Relabeled<'_>, voxels: &[usize]) -> Result<Vec<f64>> {
    let (g1, g2) = (x.group1(), x.group2());
    voxels
        .iter()
        .map(|&i| tstat_row(x.data.row(i), g1, g2, i))
        .collect()
}

/// The `L` per-permutation maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxNull {
    maxima: Vec<f64>,
    sorted: Vec<f64>,
}

impl MaxNull {
    pub fn new(maxima: Vec<f64>) -> Result<Self> {
        if maxima.is_empty() {
            return Err(Error::usage("max null needs at least one permutation"));
        }
        if let Some(i) = maxima.iter().position(|m| !m.is_finite()) {
            return Err(Error::Numerical(format!("non-finite maximum at permutation {i}")));
        }
        let mut sorted = maxima.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(MaxNull { maxima, sorted })
    }

    pub fn maxima(&self) -> &[f64] {
        &self.maxima
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.maxima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maxima.is_empty()
    }

    /// Number of maxima `>= x`.
    pub fn count_at_least(&self, x: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&m| m < x)
    }
}

/// FWER-corrected p-value of an observed maximum.
///
/// `p = #{m_i >= observed} / L`, floored at `1/L`: the observed labeling is
/// permutation 0 and is counted among the `L` draws.
pub fn pvalue(null: &MaxNull, observed: f64) -> f64 {
    let l = null.len();
    null.count_at_least(observed).max(1) as f64 / l as f64
}

/// Threshold at level `alpha`: the `(L - floor(alpha L) + 1)`-th order statistic,
/// so at most `floor(alpha L)` maxima lie strictly above it. No interpolation.
pub fn threshold_at(null: &MaxNull, alpha: f64) -> Result<f64> {
    let l = null.len() as f64;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let allowed = (alpha * l + 1e-9).floor();
    if allowed < 1.0 {
        return Err(Error::usage(format!(
            "alpha {alpha} is below 1/L = {}: resolution exceeded, increase L",
            1.0 / l
        )));
    }
    Ok(null.sorted()[null.len() - allowed as usize])
}

/// Voxels whose score is at least `tau`, ascending.
pub fn reject_set(stat_map: &[f64], tau: f64, sidedness: Sidedness) -> Vec<usize> {
    stat_map
        .iter()
        .enumerate()
        .filter(|&(_, &t)| sidedness.score(t) >= tau)
        .map(|(i, _)| i)
        .collect()
}
