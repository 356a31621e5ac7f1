//! Exhaustive Monte-Carlo permutation testing: every statistic of every
//! permutation is computed. This is the accuracy reference for the rapid engine.

use rayon::prelude::*;

use crate::data::{DataMatrix, PermutationPlan, Relabeled};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::teststat::{tstat_full, MaxNull, Sidedness};

/// Default cap on a materialized `T`: 4 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

/// The full `v x L` permutation statistic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StatMatrix {
    pub values: Matrix,
    pub plan: PermutationPlan,
}

#[derive(Debug, Clone, Copy)]
pub struct NaiveOptions {
    pub sidedness: Sidedness,
    pub materialize: bool,
    pub memory_cap: u64,
}

impl Default for NaiveOptions {
    fn default() -> Self {
        NaiveOptions { sidedness: Sidedness::OneSided, materialize: false, memory_cap: DEFAULT_MEMORY_CAP }
    }
}

#[derive(Debug, Clone)]
pub struct NaiveRun {
    pub null: MaxNull,
    pub stats: Option<StatMatrix>,
    /// Statistic evaluations, always `v * L`.
    pub evaluations: u64,
    /// Statistic map of the observed labeling (permutation 0).
    pub observed: Vec<f64>,
}

/// Statistics of permutation `index`.
pub fn permutation_column(x: &DataMatrix, plan: &PermutationPlan, index: usize) -> Result<Vec<f64>> {
    let order = plan.order(index, x.subjects())?;
    Ok(tstat_full(&Relabeled { data: x, order })?.values)
}

/// Run every permutation of `plan` in full. Permutations are evaluated in
/// parallel on the current rayon pool and merged by index.
pub fn run_naive(x: &DataMatrix, plan: &PermutationPlan, opts: NaiveOptions) -> Result<NaiveRun> {
    let (v, l) = (x.voxels(), plan.count);
    if l == 0 {
        return Err(Error::usage("plan has no permutations"));
    }
    if opts.materialize {
        let required = (v as u64).saturating_mul(l as u64).saturating_mul(8);
        if required > opts.memory_cap {
            return Err(Error::MemoryCap { required, cap: opts.memory_cap });
        }
    }
    let observed = permutation_column(x, plan, 0)?;
    let evaluate = |i: usize| -> Result<(f64, Option<Vec<f64>>)> {
        let col = if i == 0 { observed.clone() } else { permutation_column(x, plan, i)? };
        let m = opts.sidedness.column_max(&col);
        Ok((m, opts.materialize.then_some(col)))
    };
    let results: Vec<(f64, Option<Vec<f64>>)> =
        (0..l).into_par_iter().map(evaluate).collect::<Result<_>>()?;
    let mut maxima = Vec::with_capacity(l);
    let mut columns = Vec::new();
    for (m, col) in results {
        maxima.push(m);
        if let Some(c) = col {
            columns.push(c);
        }
    }
    let stats = if opts.materialize {
        Some(StatMatrix { values: Matrix::from_columns(&columns)?, plan: *plan })
    } else {
        None
    };
    Ok(NaiveRun { null: MaxNull::new(maxima)?, stats, evaluations: (v as u64) * (l as u64), observed })
}
