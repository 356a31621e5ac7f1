use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrmc::eta_min;
use crate::teststat::Sidedness;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Naive,
    Rapid,
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Engine::Naive),
            "rapid" => Ok(Engine::Rapid),
            other => Err(Error::usage(format!("unknown engine {other:?} (naive | rapid)"))),
        }
    }
}

/// How the max shift is estimated from the training columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftEstimator {
    /// Largest residual entry over all training columns and voxels.
    SupResidual,
    /// Mean over training columns of `max(true) - max(recovered + noise)`.
    MeanMaxGap,
    /// Mean of the training maxima minus the mean unshifted maximum of the first
    /// `pilot` recovered columns.
    #[default]
    PilotMean,
}

/// Where the training residuals come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualSource {
    /// Residuals of the training columns against the basis trained on them.
    InSample,
    /// Each training column is scored against a basis trained without its fold.
    #[default]
    CrossFit,
}

/// Hyperparameters for one engine run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub engine: Engine,
    /// Total permutations `L`, including the observed labeling at index 0.
    pub perms: usize,
    /// Training columns computed in full.
    pub ell: usize,
    /// Sub-sampling rate in (0, 1].
    pub eta: f64,
    pub rank: usize,
    pub seed: u64,
    #[serde(default)]
    pub sidedness: Sidedness,
    #[serde(default)]
    pub shift: ShiftEstimator,
    #[serde(default)]
    pub residuals: ResidualSource,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Recovery columns used to calibrate the pilot-mean shift.
    #[serde(default = "default_pilot")]
    pub pilot: usize,
    /// Worker threads; `None` uses the hardware parallelism.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_max_passes() -> usize {
    50
}

fn default_tolerance() -> f64 {
    1e-3
}

fn default_folds() -> usize {
    5
}

fn default_pilot() -> usize {
    192
}

impl RunConfig {
    /// Recommended settings for a `v x n` problem: `ell = n`, `rank = n`, `eta = 2 eta_min`.
    pub fn recommended(engine: Engine, v: usize, n: usize, perms: usize, seed: u64) -> Self {
        RunConfig {
            engine,
            perms,
            ell: n.min(perms),
            eta: (2.0 * eta_min(v, n)).min(1.0),
            rank: n,
            seed,
            sidedness: Sidedness::OneSided,
            shift: ShiftEstimator::default(),
            residuals: ResidualSource::default(),
            max_passes: default_max_passes(),
            tolerance: default_tolerance(),
            folds: default_folds(),
            pilot: default_pilot(),
            threads: None,
        }
    }

    /// Observed entries per recovered column, `ceil(eta v)`.
    pub fn samples_per_column(&self, v: usize) -> usize {
        ((self.eta * v as f64).ceil() as usize).clamp(1, v)
    }

    pub fn validate(&self, v: usize, n: usize) -> Result<()> {
        if self.perms == 0 {
            return Err(Error::usage("perms must be at least 1"));
        }
        if let Some(0) = self.threads {
            return Err(Error::usage("threads must be at least 1"));
        }
        if self.engine == Engine::Naive {
            return Ok(());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::usage(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.ell == 0 || self.ell > self.perms {
            return Err(Error::usage(format!(
                "ell must satisfy 1 <= ell <= L (ell = {}, L = {})",
                self.ell, self.perms
            )));
        }
        if self.rank == 0 || self.rank > n {
            return Err(Error::usage(format!("rank must satisfy 1 <= r <= n (r = {}, n = {n})", self.rank)));
        }
        if self.rank > v {
            return Err(Error::usage(format!("rank {} exceeds v = {v}", self.rank)));
        }
        if self.ell < self.rank {
            return Err(Error::usage(format!(
                "training columns cannot identify rank: ell = {} < r = {}",
                self.ell, self.rank
            )));
        }
        let k = self.samples_per_column(v);
        if k < self.rank {
            return Err(Error::usage(format!(
                "ceil(eta v) = {k} observed entries cannot determine {} coefficients",
                self.rank
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::usage("max_passes must be at least 1"));
        }
        if self.folds < 2 && self.residuals == ResidualSource::CrossFit {
            return Err(Error::usage("cross-fitting needs at least 2 folds"));
        }
        Ok(())
    }

    /// Thread pool honoring `threads`.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            b = b.num_threads(t);
        }
        b.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recommended_matches_rule_of_thumb() {
        let c = RunConfig::recommended(Engine::Rapid, 20_000, 30, 10_000, 1);
        assert_eq!(c.ell, 30);
        assert_eq!(c.rank, 30);
        assert!((c.eta - 2.0 * 30.0 * (20_000f64).ln() / 20_000.0).abs() < 1e-15);
        c.validate(20_000, 30).unwrap();
    }

    #[test]
    fn invariant_violations() {
        let base = RunConfig::recommended(Engine::Rapid, 1000, 10, 100, 1);
        let mut c = base.clone();
        c.eta = 0.0;
        assert!(c.validate(1000, 10).is_err());
        let mut c = base.clone();
        c.ell = 5;
        assert!(c.validate(1000, 10).unwrap_err().to_string().contains("cannot identify rank"));
        let mut c = base.clone();
        c.eta = 0.005;
        assert!(c.validate(1000, 10).is_err());
        let mut c = base.clone();
        c.threads = Some(0);
        assert!(c.validate(1000, 10).is_err());
        let mut c = base;
        c.ell = 101;
        assert!(c.validate(1000, 10).is_err());
    }
}
