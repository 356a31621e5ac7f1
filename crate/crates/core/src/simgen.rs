//! Synthetic two-group datasets with i.i.d. Gaussian voxels and a scattered
//! set of signal voxels shifted in group 2.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

const BLOCK: usize = 1024;

pub const GRID_SUBJECTS: [usize; 3] = [60, 150, 600];
pub const GRID_EFFECTS: [f64; 4] = [1.0, 5.0, 10.0, 25.0];
pub const GRID_SPARSITY: [f64; 4] = [0.01, 0.05, 0.10, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    /// Subjects, split equally between the groups.
    pub n: usize,
    pub v: usize,
    /// Group-2 mean at signal voxels.
    pub effect_mu: f64,
    /// Fraction of voxels carrying signal.
    pub sparsity: f64,
    pub seed: u64,
}

impl SimSpec {
    /// 30 subjects, 20000 voxels, 1% signal at mean 1.
    pub fn sim1(seed: u64) -> Self {
        SimSpec { n: 30, v: 20_000, effect_mu: 1.0, sparsity: 0.01, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_multiple_of(2) || self.n < 4 {
            return Err(Error::usage(format!("n must be even and at least 4, got {}", self.n)));
        }
        if self.v == 0 {
            return Err(Error::usage("v must be at least 1"));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::usage(format!("sparsity must lie in (0, 1], got {}", self.sparsity)));
        }
        if !self.effect_mu.is_finite() {
            return Err(Error::usage("effect must be finite"));
        }
        Ok(())
    }

    /// Notes for settings outside the 48-dataset grid.
    pub fn grid_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !GRID_SUBJECTS.contains(&self.n) {
            w.push(format!("n = {} is not one of the grid sizes {:?}", self.n, GRID_SUBJECTS));
        }
        if !GRID_EFFECTS.contains(&self.effect_mu) {
            w.push(format!("effect {} is not one of the grid effects {:?}", self.effect_mu, GRID_EFFECTS));
        }
        if !GRID_SPARSITY.contains(&self.sparsity) {
            w.push(format!("sparsity {} is not one of the grid levels {:?}", self.sparsity, GRID_SPARSITY));
        }
        w
    }

    pub fn signal_count(&self) -> usize {
        ((self.sparsity * self.v as f64).ceil() as usize).min(self.v)
    }
}

/// The full subjects x effect x sparsity grid (48 specs) at `v` voxels.
pub fn sim2_grid(v: usize, seed: u64) -> Vec<SimSpec> {
    let mut out = Vec::with_capacity(48);
    for &n in &GRID_SUBJECTS {
        for &effect_mu in &GRID_EFFECTS {
            for &sparsity in &GRID_SPARSITY {
                out.push(SimSpec { n, v, effect_mu, sparsity, seed });
            }
        }
    }
    out
}

/// Generated data plus the ground-truth signal voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub spec: SimSpec,
    pub data: DataMatrix,
    /// Signal voxel indices, ascending.
    pub signal: Vec<usize>,
}

/// Sidecar manifest written next to a generated matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SimSpec,
    pub n1: usize,
    pub n2: usize,
    pub signal_indices: Vec<usize>,
}

impl Simulated {
    pub fn manifest(&self) -> Manifest {
        Manifest { spec: self.spec, n1: self.data.n1(), n2: self.data.n2(), signal_indices: self.signal.clone() }
    }
}

/// Generate a dataset. Noise is drawn per block of voxels from its own stream.
pub fn generate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let (v, n) = (spec.v, spec.n);
    let n1 = n / 2;
    let signal = rng::sample_indices(&mut rng::stream(spec.seed, Domain::Simulation, 0), v, spec.signal_count());
    let mut is_signal = vec![false; v];
    for &i in &signal {
        is_signal[i] = true;
    }
    let mut values = vec![0.0; v * n];
    for (b, chunk) in values.chunks_mut(BLOCK * n).enumerate() {
        let mut rng = rng::stream(spec.seed, Domain::Simulation, b as u64 + 1);
        for (r, row) in chunk.chunks_mut(n).enumerate() {
            let shift = if is_signal[b * BLOCK + r] { spec.effect_mu } else { 0.0 };
            for (j, x) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = if j >= n1 { z + shift } else { z };
            }
        }
    }
    Ok(Simulated { spec: *spec, data: DataMatrix::new(values, v, n, n1)?, signal })
}

pub fn gen_sim1(seed: u64) -> Simulated {
    generate(&SimSpec::sim1(seed)).expect("fixed spec is valid")
}

pub fn gen_sim2(spec: &SimSpec) -> Result<Simulated> {
    generate(spec)
}
