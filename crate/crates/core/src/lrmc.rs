//! Low-rank completion machinery: an orthonormal basis tracked on the Grassmannian
//! from partially observed columns, least-squares completion of a column from a
//! handful of entries, and singular-spectrum diagnostics.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Domain};

/// Largest tolerated condition number of the observed rows `U_Ω`.
pub const MAX_CONDITION: f64 = 1e12;

/// Drift `max |UᵀU - I|` above which the basis is re-orthonormalized.
pub const DRIFT_LIMIT: f64 = 1e-10;

const DRIFT_CHECK_EVERY: usize = 64;

/// Orthonormal `v x r` basis, stored row-major so each voxel's coefficients are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    u: Matrix,
    updates_since_check: usize,
}

/// Observed entries of one column: sorted distinct voxel indices and their values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedColumn {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl ObservedColumn {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::usage("observed indices and values differ in length"));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::usage("observed indices must be sorted and distinct"));
        }
        Ok(ObservedColumn { indices, values })
    }

    /// Observe `column` at `indices`.
    pub fn sample(column: &[f64], indices: Vec<usize>) -> Result<Self> {
        if indices.iter().any(|&i| i >= column.len()) {
            return Err(Error::usage("observed index out of range"));
        }
        let values = indices.iter().map(|&i| column[i]).collect();
        Self::new(indices, values)
    }

    /// Every entry observed.
    pub fn full(column: &[f64]) -> Self {
        ObservedColumn { indices: (0..column.len()).collect(), values: column.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Random orthonormal `v x r` basis: thin QR of a seeded Gaussian matrix.
pub fn init_basis(v: usize, r: usize, seed: u64) -> Result<Basis> {
    if r == 0 || r > v {
        return Err(Error::usage(format!("basis rank must satisfy 1 <= r <= v (r = {r}, v = {v})")));
    }
    let mut rng = rng::stream(seed, Domain::Basis, 0);
    let g = nalgebra::DMatrix::<f64>::from_fn(v, r, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    Ok(Basis { u: Matrix::from_nalgebra(&q), updates_since_check: 0 })
}

impl Basis {
    /// Wrap a matrix whose columns are orthonormal to within [`DRIFT_LIMIT`].
    pub fn from_orthonormal(u: Matrix) -> Result<Self> {
        let b = Basis { u, updates_since_check: 0 };
        let d = b.drift();
        if d > 1e-8 {
            return Err(Error::Numerical(format!("columns are not orthonormal (drift {d:.3e})")));
        }
        Ok(b)
    }

    /// Orthonormalize the columns of `m` (thin QR).
    pub fn orthonormalize(m: &Matrix) -> Result<Self> {
        if m.cols() == 0 || m.cols() > m.rows() {
            return Err(Error::usage("basis needs 1 <= r <= v"));
        }
        let q = m.to_nalgebra().qr().q();
        Ok(Basis { u: Matrix::from_nalgebra(&q), updates_since_check: 0 })
    }

    pub fn voxels(&self) -> usize {
        self.u.rows()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.u
    }

    /// `max |UᵀU - I|`.
    pub fn drift(&self) -> f64 {
        let r = self.rank();
        let mut gram = vec![0.0; r * r];
        for i in 0..self.voxels() {
            let row = self.u.row(i);
            for a in 0..r {
                let ra = row[a];
                for b in a..r {
                    gram[a * r + b] += ra * row[b];
                }
            }
        }
        let mut worst = 0.0f64;
        for a in 0..r {
            for b in a..r {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((gram[a * r + b] - target).abs());
            }
        }
        worst
    }

    pub fn reorthonormalize(&mut self) {
        let q = self.u.to_nalgebra().qr().q();
        self.u = Matrix::from_nalgebra(&q);
        self.updates_since_check = 0;
    }

    fn maybe_check_drift(&mut self) {
        self.updates_since_check += 1;
        if self.updates_since_check >= DRIFT_CHECK_EVERY {
            self.updates_since_check = 0;
            if self.drift() > DRIFT_LIMIT {
                self.reorthonormalize();
            }
        }
    }

    /// `U w` over all voxels.
    pub fn complete_column(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.rank(), "coefficient length must equal the rank");
        (0..self.voxels()).map(|i| dot(self.u.row(i), w)).collect()
    }

    /// Factor the observed rows `U_Ω`; fails when they are too poorly conditioned.
    pub fn factor_rows(&self, indices: &[usize]) -> Result<RowFactor> {
        RowFactor::new(self, indices)
    }

    /// Least-squares coefficients `argmin ||U_Ω w - y_Ω||`.
    pub fn fit_coefficients(&self, col: &ObservedColumn) -> Result<Vec<f64>> {
        self.check_observed(col)?;
        if col.len() == self.voxels() {
            // Ω = every voxel: the normal equations collapse to Uᵀy
            return Ok(self.project(&col.values));
        }
        Ok(self.factor_rows(&col.indices)?.solve(&col.values))
    }

    /// `Uᵀ y` for a full column.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let r = self.rank();
        let mut w = vec![0.0; r];
        for (i, &yi) in y.iter().enumerate() {
            for (wa, &ua) in w.iter_mut().zip(self.u.row(i)) {
                *wa += ua * yi;
            }
        }
        w
    }

    fn check_observed(&self, col: &ObservedColumn) -> Result<()> {
        if col.len() < self.rank() {
            return Err(Error::usage(format!(
                "{} observed entries cannot determine {} coefficients",
                col.len(),
                self.rank()
            )));
        }
        if col.indices.last().is_some_and(|&i| i >= self.voxels()) {
            return Err(Error::usage("observed index out of range"));
        }
        Ok(())
    }

    /// One incremental-gradient step on the Grassmannian.
    ///
    /// Fits `w` on the observed rows, forms the residual `r` (zero off Ω), and rotates
    /// the basis in the plane of `p = U w` and `r` by `step * atan(|r| / |p|)`.
    /// `step = 1` moves the subspace onto the observed entries. Returns the
    /// pre-update residual norm `|r|`.
    pub fn track_update(&mut self, col: &ObservedColumn, step: f64) -> Result<f64> {
        self.check_observed(col)?;
        let w = if col.len() == self.voxels() {
            self.project(&col.values)
        } else {
            self.factor_rows(&col.indices)?.solve(&col.values)
        };
        let resid: Vec<f64> = col
            .indices
            .iter()
            .zip(&col.values)
            .map(|(&i, &y)| y - dot(self.u.row(i), &w))
            .collect();
        let r_norm = norm(&resid);
        // |U w| = |w| for orthonormal U
        let w_norm = norm(&w);
        if step == 0.0 || r_norm == 0.0 || w_norm == 0.0 {
            return Ok(r_norm);
        }
        let theta = step * (r_norm / w_norm).atan();
        let along_p = (theta.cos() - 1.0) / w_norm;
        let along_r = theta.sin() / r_norm;
        let w_hat: Vec<f64> = w.iter().map(|x| x / w_norm).collect();
        let mut next = col.indices.iter().zip(&resid).peekable();
        for i in 0..self.voxels() {
            let row = self.u.row_mut(i);
            let mut c = along_p * dot(row, &w);
            if let Some((_, &ri)) = next.next_if(|(&j, _)| j == i) {
                c += along_r * ri;
            }
            for (u, &wh) in row.iter_mut().zip(&w_hat) {
                *u += c * wh;
            }
        }
        self.maybe_check_drift();
        Ok(r_norm)
    }
}

/// Tracking steps between folds of `M` into `Y` in [`Tracker`].
pub const FOLD_EVERY: usize = 128;

/// A basis held as `U = Y M` for fast tracking.
///
/// A Grassmannian step changes `U` by `c ŵᵀ` where `c` is a multiple of `U w` plus
/// a residual supported on the observed rows. The first part is absorbed into the
/// `r x r` factor `M`, the second into the observed rows of `Y`, so a step costs
/// `O(k r²)` instead of `O(v r)`. Every [`FOLD_EVERY`] steps `M` is multiplied
/// into `Y` and the orthonormality drift is checked.
#[derive(Debug, Clone)]
pub struct Tracker {
    y: Matrix,
    m: Vec<f64>,
    steps: usize,
}

impl Tracker {
    pub fn new(basis: Basis) -> Self {
        let r = basis.rank();
        let mut m = vec![0.0; r * r];
        for a in 0..r {
            m[a * r + a] = 1.0;
        }
        Tracker { y: basis.u, m, steps: 0 }
    }

    pub fn voxels(&self) -> usize {
        self.y.rows()
    }

    pub fn rank(&self) -> usize {
        self.y.cols()
    }

    /// Row-major `U_Ω = Y_Ω M`.
    pub fn observed_rows(&self, indices: &[usize]) -> Vec<f64> {
        let (k, r) = (indices.len(), self.rank());
        let mut yo = Vec::with_capacity(k * r);
        for &i in indices {
            yo.extend_from_slice(self.y.row(i));
        }
        let mut out = vec![0.0; k * r];
        unsafe {
            matrixmultiply::dgemm(
                k, r, r, 1.0,
                yo.as_ptr(), r as isize, 1,
                self.m.as_ptr(), r as isize, 1,
                0.0, out.as_mut_ptr(), r as isize, 1,
            );
        }
        out
    }

    pub fn factor_rows(&self, indices: &[usize]) -> Result<RowFactor> {
        RowFactor::from_rows(self.observed_rows(indices), self.rank())
    }

    /// Same update as [`Basis::track_update`] with the observed rows already factored.
    pub fn step(&mut self, col: &ObservedColumn, rows: &[f64], factor: &RowFactor, step: f64) -> Result<f64> {
        let r = self.rank();
        let w = factor.solve(&col.values);
        let resid: Vec<f64> = rows.chunks_exact(r).zip(&col.values).map(|(u, &y)| y - dot(u, &w)).collect();
        let r_norm = norm(&resid);
        let w_norm = norm(&w);
        if step == 0.0 || r_norm == 0.0 || w_norm == 0.0 {
            return Ok(r_norm);
        }
        let theta = step * (r_norm / w_norm).atan();
        let along_p = (theta.cos() - 1.0) / w_norm;
        let along_r = theta.sin() / r_norm;
        let w_hat: Vec<f64> = w.iter().map(|x| x / w_norm).collect();
        // M <- M (I + along_p w ŵᵀ)
        let mw: Vec<f64> = self.m.chunks_exact(r).map(|row| dot(row, &w)).collect();
        for (row, &c) in self.m.chunks_exact_mut(r).zip(&mw) {
            for (x, &wh) in row.iter_mut().zip(&w_hat) {
                *x += along_p * c * wh;
            }
        }
        // Y_Ω += along_r r_Ω qᵀ with Mᵀ q = ŵ
        let mt = nalgebra::DMatrix::from_row_slice(r, r, &self.m).transpose();
        let q = match mt.lu().solve(&nalgebra::DVector::from_column_slice(&w_hat)) {
            Some(q) if q.iter().all(|x| x.is_finite()) => q,
            _ => {
                return Err(Error::Numerical("tracking factor became singular".into()));
            }
        };
        for (&i, &ri) in col.indices.iter().zip(&resid) {
            let c = along_r * ri;
            for (u, &qa) in self.y.row_mut(i).iter_mut().zip(q.iter()) {
                *u += c * qa;
            }
        }
        self.steps += 1;
        if self.steps.is_multiple_of(FOLD_EVERY) || theta.cos() < 0.5 {
            self.fold();
        }
        Ok(r_norm)
    }

    /// Multiply `M` into `Y`, reset `M = I`, and re-orthonormalize if drifted.
    pub fn fold(&mut self) {
        let (v, r) = (self.voxels(), self.rank());
        let mut out = vec![0.0; v * r];
        unsafe {
            matrixmultiply::dgemm(
                v, r, r, 1.0,
                self.y.as_slice().as_ptr(), r as isize, 1,
                self.m.as_ptr(), r as isize, 1,
                0.0, out.as_mut_ptr(), r as isize, 1,
            );
        }
        self.y = Matrix::from_vec(v, r, out).expect("shape preserved");
        self.m.iter_mut().enumerate().for_each(|(i, x)| *x = if i % (r + 1) == 0 { 1.0 } else { 0.0 });
        let mut b = Basis { u: std::mem::replace(&mut self.y, Matrix::zeros(0, 0)), updates_since_check: 0 };
        if b.drift() > DRIFT_LIMIT {
            b.reorthonormalize();
        }
        self.y = b.u;
    }

    pub fn into_basis(mut self) -> Basis {
        self.fold();
        Basis { u: self.y, updates_since_check: 0 }
    }
}

/// Condition number of `U_Ω` up to which the normal equations are solved
/// directly; above it the Householder factorization is used.
pub const NORMAL_EQUATIONS_LIMIT: f64 = 1e4;

/// Rank-revealing factorization of the observed rows `U_Ω`, reusable across
/// right-hand sides on the same index set.
///
/// Well-conditioned rows go through a diagonally pivoted Cholesky factorization
/// of `U_Ωᵀ U_Ω`; its pivots are the squared diagonal of the column-pivoted QR
/// factor, so both paths estimate the condition number the same way.
#[derive(Debug, Clone)]
pub struct RowFactor {
    kind: FactorKind,
    condition: f64,
}

#[derive(Debug, Clone)]
enum FactorKind {
    Cholesky(PivotedCholesky),
    Householder(Householder),
}

#[derive(Debug, Clone)]
struct PivotedCholesky {
    r: usize,
    k: usize,
    /// Gathered `U_Ω`, row-major `k x r`.
    rows: Vec<f64>,
    /// Lower factor, row-major `r x r`, in pivoted order.
    l: Vec<f64>,
    perm: Vec<usize>,
}

impl PivotedCholesky {
    /// Hands the rows back when a pivot vanishes.
    fn new(rows: Vec<f64>, r: usize) -> std::result::Result<(Self, f64), Vec<f64>> {
        let k = rows.len() / r;
        let mut g = vec![0.0; r * r];
        // G = AᵀA with A the gathered k x r rows
        unsafe {
            matrixmultiply::dgemm(
                r, k, r, 1.0,
                rows.as_ptr(), 1, r as isize,
                rows.as_ptr(), r as isize, 1,
                0.0, g.as_mut_ptr(), r as isize, 1,
            );
        }
        let mut perm: Vec<usize> = (0..r).collect();
        let mut l = vec![0.0; r * r];
        let (mut first, mut last) = (0.0, 0.0);
        for p in 0..r {
            let best = (p..r).max_by(|&a, &b| g[a * r + a].total_cmp(&g[b * r + b])).expect("p < r");
            if best != p {
                perm.swap(p, best);
                for c in 0..r {
                    g.swap(p * r + c, best * r + c);
                }
                for row in 0..r {
                    g.swap(row * r + p, row * r + best);
                }
                for c in 0..p {
                    l.swap(p * r + c, best * r + c);
                }
            }
            let d = g[p * r + p];
            if !(d > 0.0) {
                return Err(rows);
            }
            if p == 0 {
                first = d;
            }
            last = d;
            let lpp = d.sqrt();
            l[p * r + p] = lpp;
            for i in p + 1..r {
                l[i * r + p] = g[i * r + p] / lpp;
            }
            for i in p + 1..r {
                let li = l[i * r + p];
                for j in p + 1..=i {
                    g[i * r + j] -= li * l[j * r + p];
                    g[j * r + i] = g[i * r + j];
                }
            }
        }
        Ok((PivotedCholesky { r, k, rows, l, perm }, (first / last).sqrt()))
    }

    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let r = self.r;
        let mut rhs = vec![0.0; r];
        for (u, &yi) in self.rows.chunks_exact(r).zip(y) {
            for (b, &ua) in rhs.iter_mut().zip(u) {
                *b += ua * yi;
            }
        }
        let mut z: Vec<f64> = self.perm.iter().map(|&j| rhs[j]).collect();
        for i in 0..r {
            let s = z[i] - dot(&self.l[i * r..i * r + i], &z[..i]);
            z[i] = s / self.l[i * r + i];
        }
        for i in (0..r).rev() {
            let mut s = z[i];
            for j in i + 1..r {
                s -= self.l[j * r + i] * z[j];
            }
            z[i] = s / self.l[i * r + i];
        }
        let mut w = vec![0.0; r];
        for (p, &j) in self.perm.iter().enumerate() {
            w[j] = z[p];
        }
        w
    }
}

impl RowFactor {
    fn new(basis: &Basis, indices: &[usize]) -> Result<Self> {
        let mut rows = Vec::with_capacity(indices.len() * basis.rank());
        for &i in indices {
            rows.extend_from_slice(basis.u.row(i));
        }
        Self::from_rows(rows, basis.rank())
    }

    /// Factor a gathered row-major `k x r` block.
    pub(crate) fn from_rows(rows: Vec<f64>, r: usize) -> Result<Self> {
        let k = rows.len() / r;
        if k < r {
            return Err(Error::usage(format!("{k} observed entries cannot determine {r} coefficients")));
        }
        let rows = match PivotedCholesky::new(rows, r) {
            Ok((c, condition)) if condition <= NORMAL_EQUATIONS_LIMIT => {
                return Ok(RowFactor { kind: FactorKind::Cholesky(c), condition });
            }
            Ok((c, _)) => c.rows,
            Err(rows) => rows,
        };
        let h = Householder::new(&rows, r)?;
        let condition = h.condition;
        Ok(RowFactor { kind: FactorKind::Householder(h), condition })
    }

    /// Condition estimate of `U_Ω` from the pivoted factorization.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Whether the Householder path was taken.
    pub fn is_householder(&self) -> bool {
        matches!(self.kind, FactorKind::Householder(_))
    }

    /// Least-squares solution for observed values `y` (same order as the indices).
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        match &self.kind {
            FactorKind::Cholesky(c) => {
                assert_eq!(y.len(), c.k, "right-hand side length must equal the number of observed rows");
                c.solve(y)
            }
            FactorKind::Householder(h) => {
                assert_eq!(y.len(), h.k, "right-hand side length must equal the number of observed rows");
                h.solve(y)
            }
        }
    }
}

/// Column-pivoted Householder QR of `U_Ω`.
#[derive(Debug, Clone)]
struct Householder {
    k: usize,
    r: usize,
    /// Column-major `k x r`: R in the upper triangle, Householder vectors below.
    qr: Vec<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    condition: f64,
}

impl Householder {
    fn new(rows: &[f64], r: usize) -> Result<Self> {
        let k = rows.len() / r;
        let mut a = vec![0.0; k * r];
        for (row, u) in rows.chunks_exact(r).enumerate() {
            for (j, &x) in u.iter().enumerate() {
                a[j * k + row] = x;
            }
        }
        let mut tau = vec![0.0; r];
        let mut perm: Vec<usize> = (0..r).collect();
        for p in 0..r {
            // pivot: remaining column with the largest trailing norm
            let (mut best, mut best_norm) = (p, -1.0);
            for j in p..r {
                let c = &a[j * k + p..(j + 1) * k];
                let s = dot(c, c);
                if s > best_norm {
                    best = j;
                    best_norm = s;
                }
            }
            if best != p {
                for i in 0..k {
                    a.swap(p * k + i, best * k + i);
                }
                perm.swap(p, best);
            }
            let col = &mut a[p * k + p..(p + 1) * k];
            let norm_x = best_norm.max(0.0).sqrt();
            if norm_x == 0.0 {
                tau[p] = 0.0;
                continue;
            }
            let alpha = if col[0] > 0.0 { -norm_x } else { norm_x };
            let v0 = col[0] - alpha;
            // v = [1, col[1..] / v0], tau = -v0 / alpha
            for x in col[1..].iter_mut() {
                *x /= v0;
            }
            col[0] = alpha;
            tau[p] = -v0 / alpha;
            let (head, tail) = a.split_at_mut((p + 1) * k);
            let v_tail = &head[p * k + p + 1..(p + 1) * k];
            for j in 0..(r - p - 1) {
                let c = &mut tail[j * k + p..(j + 1) * k];
                let s = (c[0] + dot(&c[1..], v_tail)) * tau[p];
                c[0] -= s;
                for (ci, vi) in c[1..].iter_mut().zip(v_tail) {
                    *ci -= s * vi;
                }
            }
        }
        let d0 = a[0].abs();
        let dl = a[(r - 1) * k + (r - 1)].abs();
        let condition = if dl == 0.0 { f64::INFINITY } else { d0 / dl };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        Ok(Householder { k, r, qr: a, tau, perm, condition })
    }

    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let (k, r) = (self.k, self.r);
        let mut b = y.to_vec();
        for p in 0..r {
            let v_tail = &self.qr[p * k + p + 1..(p + 1) * k];
            let s = (b[p] + dot(&b[p + 1..], v_tail)) * self.tau[p];
            b[p] -= s;
            for (bi, vi) in b[p + 1..].iter_mut().zip(v_tail) {
                *bi -= s * vi;
            }
        }
        let mut z = vec![0.0; r];
        for p in (0..r).rev() {
            let mut s = b[p];
            for j in p + 1..r {
                s -= self.qr[j * k + p] * z[j];
            }
            z[p] = s / self.qr[p * k + p];
        }
        let mut w = vec![0.0; r];
        for (p, &j) in self.perm.iter().enumerate() {
            w[j] = z[p];
        }
        w
    }
}

/// Dot product with four independent partial sums, which lets the loop vectorize.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Diminishing step `c / (1 + t / tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub scale: f64,
    pub tau: f64,
}

impl StepSchedule {
    pub fn new(scale: f64, tau: f64) -> Self {
        StepSchedule { scale, tau: tau.max(f64::MIN_POSITIVE) }
    }

    pub fn step(&self, t: usize) -> f64 {
        self.scale / (1.0 + t as f64 / self.tau)
    }
}

/// Minimum sub-sampling rate `n ln(v) / v`, clamped to (0, 1].
pub fn eta_min(v: usize, n: usize) -> f64 {
    if v <= 1 {
        return 1.0;
    }
    let e = n as f64 * (v as f64).ln() / v as f64;
    e.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Matrices with `min(rows, cols)` up to this size use a dense SVD.
pub const DENSE_SPECTRUM_LIMIT: usize = 1200;

/// Leading `k` singular values, nonincreasing.
///
/// Small matrices use a dense SVD; larger ones run randomized subspace
/// iteration until the leading values settle to 1e-12 relative change.
pub fn spectrum(t: &Matrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    let min_dim = t.rows().min(t.cols());
    if k == 0 || k > min_dim {
        return Err(Error::usage(format!("k must satisfy 1 <= k <= min(v, L) = {min_dim}, got {k}")));
    }
    let mut sv = if min_dim <= DENSE_SPECTRUM_LIMIT {
        t.to_nalgebra().singular_values().as_slice().to_vec()
    } else {
        subspace_iteration(t, k, seed)?
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.truncate(k);
    Ok(sv)
}

fn subspace_iteration(t: &Matrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    use nalgebra::DMatrix;
    let (m, n) = (t.rows(), t.cols());
    let block = (k + 10).min(m.min(n));
    let a = t.to_nalgebra();
    let mut rng = rng::stream(seed, Domain::Basis, 1);
    let omega = DMatrix::<f64>::from_fn(n, block, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (&a * omega).qr().q();
    let mut prev: Vec<f64> = vec![0.0; k];
    for _ in 0..200 {
        let z = (a.transpose() * &q).qr().q();
        q = (&a * z).qr().q();
        let b = q.transpose() * &a;
        let mut sv = b.singular_values().as_slice().to_vec();
        sv.sort_by(|x, y| y.total_cmp(x));
        let settled = sv
            .iter()
            .zip(&prev)
            .take(k)
            .all(|(s, p)| (s - p).abs() <= 1e-12 * sv[0].max(f64::MIN_POSITIVE));
        prev = sv;
        if settled {
            return Ok(prev);
        }
    }
    Err(Error::Numerical("subspace iteration did not settle in 200 sweeps".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng::stream(seed, Domain::Simulation, 99);
        let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn init_basis_orthonormal_and_reproducible() {
        let b = init_basis(200, 7, 3).unwrap();
        assert!(b.drift() < 1e-12);
        assert_eq!(b, init_basis(200, 7, 3).unwrap());
        assert_ne!(b, init_basis(200, 7, 4).unwrap());
        let square = init_basis(12, 12, 1).unwrap();
        assert!(square.drift() < 1e-12);
        assert!(matches!(init_basis(3, 4, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn fit_reads_off_identity_rows() {
        let mut m = Matrix::zeros(10, 3);
        for j in 0..3 {
            m.set(j, j, 1.0);
        }
        let b = Basis::from_orthonormal(m).unwrap();
        let col = ObservedColumn::new(vec![0, 1, 2, 6], vec![4.0, -1.0, 2.5, 0.0]).unwrap();
        let w = b.fit_coefficients(&col).unwrap();
        for (a, e) in w.iter().zip([4.0, -1.0, 2.5]) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn full_observation_is_projection() {
        let b = init_basis(50, 4, 8).unwrap();
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let w = b.fit_coefficients(&ObservedColumn::full(&y)).unwrap();
        assert_eq!(w, b.project(&y));
        // the pivoted-QR path agrees on a full index set too
        let w2 = b.factor_rows(&(0..50).collect::<Vec<_>>()).unwrap().solve(&y);
        for (a, c) in w.iter().zip(&w2) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_matches_normal_equations() {
        let b = init_basis(300, 6, 11).unwrap();
        let mut rng = rng::stream(5, Domain::RecoverSample, 0);
        let idx = rng::sample_indices(&mut rng, 300, 40);
        let vals: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let col = ObservedColumn::new(idx.clone(), vals.clone()).unwrap();
        let w = b.fit_coefficients(&col).unwrap();
        // oracle: (AᵀA) w = Aᵀy via nalgebra Cholesky
        let a = nalgebra::DMatrix::from_fn(40, 6, |i, j| b.matrix().get(idx[i], j));
        let y = nalgebra::DVector::from_vec(vals);
        let oracle = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * y));
        for (x, o) in w.iter().zip(oracle.iter()) {
            assert!((x - o).abs() < 1e-10, "{x} vs {o}");
        }
    }

    #[test]
    fn ill_conditioned_rows_request_resample() {
        // rows observed only where the basis has support in the first column
        let mut m = Matrix::zeros(6, 2);
        m.set(0, 0, 1.0);
        m.set(5, 1, 1.0);
        let b = Basis::from_orthonormal(m).unwrap();
        let col = ObservedColumn::new(vec![0, 1, 2], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(b.fit_coefficients(&col), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn complete_column_cases() {
        let b = init_basis(20, 3, 2).unwrap();
        assert!(b.complete_column(&[0.0; 3]).iter().all(|&x| x == 0.0));
        assert_eq!(b.complete_column(&[0.0, 1.0, 0.0]), b.matrix().column(1));
        let (w1, w2) = ([0.5, -1.0, 2.0], [1.5, 0.25, -0.5]);
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, c)| a + c).collect();
        let lhs = b.complete_column(&sum);
        let (c1, c2) = (b.complete_column(&w1), b.complete_column(&w2));
        for i in 0..20 {
            assert!((lhs[i] - c1[i] - c2[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn in_span_column_is_fixed_point() {
        let mut b = init_basis(100, 4, 21).unwrap();
        let y = b.complete_column(&[1.0, -2.0, 0.5, 3.0]);
        let idx = rng::sample_indices(&mut rng::stream(1, Domain::TrainSample, 0), 100, 20);
        let col = ObservedColumn::sample(&y, idx).unwrap();
        let before = b.clone();
        let res = b.track_update(&col, 1.0).unwrap();
        assert!(res < 1e-12);
        for (a, c) in b.matrix().as_slice().iter().zip(before.matrix().as_slice()) {
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_step_leaves_basis_untouched() {
        let mut b = init_basis(60, 3, 5).unwrap();
        let before = b.clone();
        let y: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        let col = ObservedColumn::sample(&y, (0..60).step_by(3).collect()).unwrap();
        let res = b.track_update(&col, 0.0).unwrap();
        assert!(res > 0.0);
        assert_eq!(b, before);
    }

    #[test]
    fn greedy_step_fits_observed_column() {
        let mut b = init_basis(80, 3, 9).unwrap();
        let y: Vec<f64> = (0..80).map(|i| ((i * i) as f64 * 0.01).sin()).collect();
        let col = ObservedColumn::sample(&y, (0..80).step_by(2).collect()).unwrap();
        let before = b.track_update(&col, 1.0).unwrap();
        let after = b.clone().track_update(&col, 0.0).unwrap();
        assert!(after < 1e-3 * before.max(1.0), "{before} -> {after}");
        assert!(b.drift() < 1e-12);
    }

    #[test]
    fn eta_min_examples() {
        assert!((eta_min(20_000, 30) - 0.014_855).abs() < 1e-5);
        assert!((eta_min(540_000, 50) - 0.001_222).abs() < 1e-5);
        assert_eq!(eta_min(10, 30), 1.0);
    }

    #[test]
    fn spectrum_known_values() {
        let mut m = Matrix::zeros(5, 4);
        m.set(0, 0, 3.0);
        m.set(1, 1, 2.0);
        m.set(2, 2, 1.0);
        let s = spectrum(&m, 3, 0).unwrap();
        assert_eq!(s, vec![3.0, 2.0, 1.0]);
        assert!(spectrum(&m, 5, 0).is_err());
    }

    #[test]
    fn spectrum_of_exact_rank_three() {
        let l = random_matrix(200, 3, 1);
        let r = random_matrix(3, 100, 2);
        let t = Matrix::from_nalgebra(&(l.to_nalgebra() * r.to_nalgebra()));
        let s = spectrum(&t, 6, 0).unwrap();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        for &x in &s[3..] {
            assert!(x < 1e-8 * s[0]);
        }
    }

    #[test]
    fn subspace_iteration_matches_dense_svd() {
        // low-rank plus small noise: iteration converges on the leading values
        let l = random_matrix(1500, 5, 3);
        let r = random_matrix(5, 1300, 4);
        let mut t = l.to_nalgebra() * r.to_nalgebra();
        let noise = random_matrix(1500, 1300, 5).to_nalgebra();
        t += noise * 1e-3;
        let t = Matrix::from_nalgebra(&t);
        let fast = spectrum(&t, 5, 7).unwrap();
        let mut dense = t.to_nalgebra().singular_values().as_slice().to_vec();
        dense.sort_by(|a, b| b.total_cmp(a));
        for (f, d) in fast.iter().zip(&dense) {
            assert!((f - d).abs() <= 1e-8 * d, "{f} vs {d}");
        }
    }
}
