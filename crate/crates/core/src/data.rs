use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Stacked subject matrix: `v` voxels (rows) by `n` subjects (columns), row-major.
///
/// Under the identity labeling columns `0..n1` are group 1 and `n1..n` are group 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    v: usize,
    n: usize,
    n1: usize,
}

impl DataMatrix {
    pub fn new(values: Vec<f64>, v: usize, n: usize, n1: usize) -> Result<Self> {
        if v == 0 {
            return Err(Error::Data("v must be at least 1".into()));
        }
        if n1 < 2 || n < n1 + 2 {
            return Err(Error::Data(format!(
                "each group needs at least 2 subjects (n = {n}, n1 = {n1})"
            )));
        }
        if values.len() != v * n {
            return Err(Error::Data(format!(
                "expected {} values for a {v}x{n} matrix, got {}",
                v * n,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite entry at row {}, column {}",
                pos / n,
                pos % n
            )));
        }
        Ok(DataMatrix { values, v, n, n1 })
    }

    /// Build from a closure over `(voxel, subject)`.
    pub fn from_fn(v: usize, n: usize, n1: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(v * n);
        for i in 0..v {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        Self::new(values, v, n, n1)
    }

    pub fn voxels(&self) -> usize {
        self.v
    }

    pub fn subjects(&self) -> usize {
        self.n
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n - self.n1
    }

    #[inline]
    pub fn row(&self, voxel: usize) -> &[f64] {
        &self.values[voxel * self.n..(voxel + 1) * self.n]
    }

    pub fn get(&self, voxel: usize, subject: usize) -> f64 {
        self.values[voxel * self.n + subject]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Reorder columns: column `j` of the result is column `order[j]` of `self`.
    pub fn reorder_columns(&self, order: &[usize]) -> Result<Self> {
        check_bijection(order, self.n)?;
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.v {
            let row = self.row(i);
            values.extend(order.iter().map(|&j| row[j]));
        }
        Ok(DataMatrix { values, v: self.v, n: self.n, n1: self.n1 })
    }
}

fn check_bijection(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::usage(format!("relabeling has {} entries, expected {n}", order.len())));
    }
    let mut seen = vec![false; n];
    for &j in order {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(Error::usage("relabeling is not a permutation of the subjects"));
        }
    }
    Ok(())
}

/// `count` relabelings derived from one master seed.
///
/// Index 0 is the identity (the observed labeling). Index `i > 0` is a
/// Fisher–Yates shuffle drawn from `stream(master_seed, Permute, i)`, so draws are
/// independent (with replacement across indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PermutationPlan {
    pub master_seed: u64,
    pub count: usize,
}

impl PermutationPlan {
    pub fn new(master_seed: u64, count: usize) -> Self {
        PermutationPlan { master_seed, count }
    }

    /// Column order for permutation `index` over `n` subjects.
    pub fn order(&self, index: usize, n: usize) -> Result<Vec<usize>> {
        if index >= self.count {
            return Err(Error::usage(format!(
                "permutation index {index} out of range (plan has {})",
                self.count
            )));
        }
        Ok(self.order_unchecked(index, n))
    }

    pub(crate) fn order_unchecked(&self, index: usize, n: usize) -> Vec<usize> {
        if index == 0 {
            (0..n).collect()
        } else {
            rng::shuffle(&mut rng::stream(self.master_seed, Domain::Permute, index as u64), n)
        }
    }
}

/// A relabeled view of a data matrix: the first `n1` entries of `order` form pseudo-group 1.
#[derive(Debug, Clone)]
pub struct Relabeled<'a> {
    pub data: &'a DataMatrix,
    pub order: Vec<usize>,
}

impl<'a> Relabeled<'a> {
    pub fn new(data: &'a DataMatrix, order: Vec<usize>) -> Result<Self> {
        check_bijection(&order, data.subjects())?;
        Ok(Relabeled { data, order })
    }

    pub fn identity(data: &'a DataMatrix) -> Self {
        Relabeled { data, order: (0..data.subjects()).collect() }
    }

    pub fn group1(&self) -> &[usize] {
        &self.order[..self.data.n1()]
    }

    pub fn group2(&self) -> &[usize] {
        &self.order[self.data.n1()..]
    }

    pub fn to_matrix(&self) -> DataMatrix {
        self.data.reorder_columns(&self.order).expect("order validated at construction")
    }
}

/// Apply permutation `index` of `plan` to `x`.
pub fn permute_columns<'a>(x: &'a DataMatrix, plan: &PermutationPlan, index: usize) -> Result<Relabeled<'a>> {
    let order = plan.order(index, x.subjects())?;
    Ok(Relabeled { data: x, order })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_by_four() -> DataMatrix {
        DataMatrix::from_fn(2, 4, 2, |i, j| (10 * i + j) as f64).unwrap()
    }

    #[test]
    fn identity_keeps_groups() {
        let x = four_by_four();
        let plan = PermutationPlan::new(5, 10);
        let r = permute_columns(&x, &plan, 0).unwrap();
        assert_eq!(r.group1(), &[0, 1]);
        assert_eq!(r.group2(), &[2, 3]);
        assert_eq!(r.to_matrix(), x);
    }

    #[test]
    fn explicit_shuffle_swaps_groups() {
        // shuffle (3,4,1,2) in 1-based terms
        let x = four_by_four();
        let r = Relabeled::new(&x, vec![2, 3, 0, 1]).unwrap();
        assert_eq!(r.group1(), &[2, 3]);
        assert_eq!(r.group2(), &[0, 1]);
        let m = r.to_matrix();
        assert_eq!(m.row(0), &[2.0, 3.0, 0.0, 1.0]);
    }

    #[test]
    fn out_of_range_index_is_usage_error() {
        let x = four_by_four();
        let plan = PermutationPlan::new(5, 3);
        assert!(matches!(permute_columns(&x, &plan, 3), Err(Error::Usage(_))));
    }

    #[test]
    fn plan_regenerates_identically() {
        let plan = PermutationPlan::new(77, 100);
        for i in 0..100 {
            let a = plan.order(i, 30).unwrap();
            assert_eq!(a, plan.order(i, 30).unwrap());
            let mut s = a.clone();
            s.sort_unstable();
            assert_eq!(s, (0..30).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_invalid_matrices() {
        assert!(DataMatrix::new(vec![], 0, 4, 2).is_err());
        assert!(DataMatrix::new(vec![0.0; 3], 1, 3, 2).is_err());
        let e = DataMatrix::new(vec![0.0, 1.0, f64::NAN, 2.0], 1, 4, 2).unwrap_err();
        assert!(e.to_string().contains("column 2"));
    }
}
