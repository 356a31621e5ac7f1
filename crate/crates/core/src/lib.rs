//! Family-wise-error-corrected max-null distributions for two-group voxel-wise
//! permutation tests.
//!
//! Two engines produce the same [`MaxNull`]: [`naive::run_naive`] evaluates
//! every statistic of every permutation, and [`rapid::run_rapid`] computes a few
//! permutations in full, learns a low-rank basis of the permutation statistic
//! matrix, and recovers the remaining maxima from a small sample of statistics
//! per permutation.

pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod lrmc;
pub mod matrix;
pub mod metrics;
pub mod naive;
pub mod rapid;
pub mod rng;
pub mod simgen;
pub mod teststat;

pub use config::{Engine, ResidualSource, RunConfig, ShiftEstimator};
pub use data::{permute_columns, DataMatrix, PermutationPlan, Relabeled};
pub use error::{Error, Result};
pub use lrmc::{eta_min, init_basis, spectrum, Basis, ObservedColumn};
pub use matrix::Matrix;
pub use naive::{run_naive, NaiveOptions, StatMatrix};
pub use rapid::{run_rapid, SubspaceModel};
pub use teststat::{pvalue, reject_set, threshold_at, tstat_full, tstat_subset, MaxNull, Sidedness, StatColumn};
