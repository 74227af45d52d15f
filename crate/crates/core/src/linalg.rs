//! Dense and block-diagonal linear algebra used by the pooling solvers.
//!
//! Matrices are small-to-medium, dense, row-major `f64`. The SVD is delegated
//! to `faer`; Cholesky, conjugate gradient and the block-diagonal solve
//! are implemented here because their failure reporting (pivot index, block
//! index, convergence report) is part of the contract.

use std::fmt;

use crate::error::{GmpError, Result};

/// Default relative cutoff for treating singular values as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Asymmetry (relative to the largest entry) below which a matrix is
/// symmetrized instead of rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major values, rejecting a length mismatch
    /// or any non-finite entry.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(GmpError::DimensionMismatch {
                context: "matrix values",
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GmpError::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.values[i * n + i] = d;
        }
        Self::new(n, n, m.values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(GmpError::DimensionMismatch {
                    context: "matrix row",
                    expected: n_cols,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(n_rows, n_cols, values)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.values[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ x`
    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_transposed dimension");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.values[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a != 0.0 {
                    axpy(a, other.row(k), dst);
                }
            }
        }
        out
    }

    /// `A Aᵀ`, exactly symmetric.
    pub fn outer_gram(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                out.values[i * n + j] = v;
                out.values[j * n + i] = v;
            }
        }
        out
    }

    /// `Aᵀ A`, exactly symmetric.
    pub fn inner_gram(&self) -> Self {
        self.transpose().outer_gram()
    }

    pub fn add_diagonal(&mut self, lambda: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.values[i * self.cols + i] += lambda;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn to_faer(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

/// A block-diagonal matrix stored as its square diagonal blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagonalMatrix {
    blocks: Vec<DenseMatrix>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockDiagonalMatrix {
    pub fn new(blocks: Vec<DenseMatrix>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for (k, b) in blocks.iter().enumerate() {
            if !b.is_square() || b.rows() == 0 {
                return Err(GmpError::InvalidBlockStructure(format!(
                    "block {k} is {}x{}, expected a non-empty square block",
                    b.rows(),
                    b.cols()
                )));
            }
            offsets.push(dim);
            dim += b.rows();
        }
        Ok(Self {
            blocks,
            offsets,
            dim,
        })
    }

    pub fn blocks(&self) -> &[DenseMatrix] {
        &self.blocks
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim;
        let mut out = DenseMatrix::zeros(n, n);
        for (b, &off) in self.blocks.iter().zip(&self.offsets) {
            for i in 0..b.rows() {
                for j in 0..b.cols() {
                    out.values[(off + i) * n + off + j] = b.get(i, j);
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveMethod {
    Svd,
    Cholesky,
    Cg,
    Block,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Svd => "svd",
            SolveMethod::Cholesky => "cholesky",
            SolveMethod::Cg => "cg",
            SolveMethod::Block => "block",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `‖a − b‖ / ‖b‖`, falling back to the absolute difference when `b` is zero.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(b);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GmpError::NonFinite(what))
    }
}

/// Minimum-norm least-squares solution `A⁺ b` through a thin SVD.
///
/// Singular values at or below `rank_tol × σ_max` are treated as zero.
pub fn min_norm_least_squares(a: &DenseMatrix, b: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(GmpError::Empty("least-squares matrix"));
    }
    if b.len() != a.rows() {
        return Err(GmpError::DimensionMismatch {
            context: "least-squares right-hand side",
            expected: a.rows(),
            actual: b.len(),
        });
    }
    if !(rank_tol > 0.0) {
        return Err(GmpError::invalid("rank_tol must be positive"));
    }
    check_finite(b, "least-squares right-hand side")?;

    let svd = a
        .to_faer()
        .thin_svd()
        .map_err(|_| GmpError::invalid("SVD did not converge"))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let sigma_max = (0..s.nrows()).fold(0.0f64, |m, k| m.max(s[k]));
    let cutoff = rank_tol * sigma_max;

    let mut x = vec![0.0; a.cols()];
    for k in 0..s.nrows() {
        let sk = s[k];
        if sk <= cutoff || sk == 0.0 {
            continue;
        }
        let coeff = (0..a.rows()).map(|i| u[(i, k)] * b[i]).sum::<f64>() / sk;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += coeff * v[(j, k)];
        }
    }
    Ok(x)
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(GmpError::Empty("matrix"));
    }
    let s = a
        .to_faer()
        .singular_values()
        .map_err(|_| GmpError::invalid("SVD did not converge"))?;
    Ok(s)
}

/// Checks symmetry and returns the symmetrized copy `(A + Aᵀ)/2`.
fn symmetrized(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    let scale = a.max_abs();
    let mut out = a.clone();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (a.get(i, j), a.get(j, i));
            worst = worst.max((x - y).abs());
            let m = 0.5 * (x + y);
            out.values[i * n + j] = m;
            out.values[j * n + i] = m;
        }
    }
    let rel = if scale > 0.0 { worst / scale } else { 0.0 };
    if rel > SYMMETRY_TOL {
        return Err(GmpError::NotSymmetric(rel));
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    /// Factors `a` after the symmetry check. A pivot that is not
    /// comfortably above round-off (relative to the largest diagonal entry)
    /// is reported with its index.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(GmpError::DimensionMismatch {
                context: "cholesky (square matrix)",
                expected: a.rows(),
                actual: a.cols(),
            });
        }
        if a.is_empty() {
            return Err(GmpError::Empty("cholesky matrix"));
        }
        let a = symmetrized(a)?;
        let n = a.rows();
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a.get(i, i).abs()));
        let pivot_floor = 16.0 * n as f64 * f64::EPSILON * max_diag;

        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let row_j = &l[j * n..j * n + j];
            let d = a.get(j, j) - dot(row_j, row_j);
            if !(d > pivot_floor) {
                return Err(GmpError::NotPositiveDefinite { pivot: j });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let s = a.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "cholesky solve dimension");
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&l[i * n..i * n + i], &y[..i]);
            y[i] = (y[i] - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

/// Direct SPD solve (Cholesky plus one step of iterative refinement).
pub fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(GmpError::DimensionMismatch {
            context: "spd right-hand side",
            expected: a.rows(),
            actual: b.len(),
        });
    }
    check_finite(b, "spd right-hand side")?;
    let chol = CholeskyFactor::new(a)?;
    let mut x = chol.solve(b);
    let ax = a.matvec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let dx = chol.solve(&r);
    axpy(1.0, &dx, &mut x);
    Ok(x)
}

/// Conjugate gradient from a zero initial iterate, no preconditioner.
///
/// Stops when `‖apply(x) − b‖ ≤ tol ‖b‖`. On hitting `max_iter` the iterate
/// with the smallest residual is returned and the report is flagged as not
/// converged.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(tol > 0.0) {
        return Err(GmpError::invalid("cg tolerance must be positive"));
    }
    check_finite(b, "cg right-hand side")?;
    let n = b.len();
    let b_norm = norm(b);
    let target = tol * b_norm;

    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveReport {
                method: SolveMethod::Cg,
                iterations: 0,
                residual_norm: 0.0,
                converged: true,
            },
        ));
    }

    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut best = (b_norm, x.clone());
    let mut iterations = 0;

    while iterations < max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rs / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;

        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= target {
            // Recompute the true residual; the recurrence drifts.
            let true_r = residual(&apply, &x, b);
            if true_r <= target {
                return Ok((
                    x,
                    SolveReport {
                        method: SolveMethod::Cg,
                        iterations,
                        residual_norm: true_r,
                        converged: true,
                    },
                ));
            }
        }
        if rs_new.sqrt() < best.0 {
            best = (rs_new.sqrt(), x.clone());
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
    }

    let final_r = residual(&apply, &x, b);
    let (x, residual_norm) = if final_r <= best.0 {
        (x, final_r)
    } else {
        let r_best = residual(&apply, &best.1, b);
        (best.1, r_best)
    };
    Ok((
        x,
        SolveReport {
            method: SolveMethod::Cg,
            iterations,
            residual_norm,
            converged: residual_norm <= target,
        },
    ))
}

fn residual<F: Fn(&[f64]) -> Vec<f64>>(apply: &F, x: &[f64], b: &[f64]) -> f64 {
    let ax = apply(x);
    ax.iter()
        .zip(b)
        .map(|(a, bi)| (bi - a) * (bi - a))
        .sum::<f64>()
        .sqrt()
}

/// Solves a block-diagonal SPD system block by block.
pub fn solve_block_diagonal(m: &BlockDiagonalMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.dim() {
        return Err(GmpError::DimensionMismatch {
            context: "block-diagonal right-hand side",
            expected: m.dim(),
            actual: b.len(),
        });
    }
    let mut x = Vec::with_capacity(b.len());
    for (k, (block, &off)) in m.blocks().iter().zip(m.offsets()).enumerate() {
        let rhs = &b[off..off + block.rows()];
        let xk = solve_spd(block, rhs).map_err(|e| match e {
            GmpError::NotPositiveDefinite { pivot } => {
                GmpError::BlockNotPositiveDefinite { block: k, pivot }
            }
            other => other,
        })?;
        x.extend(xk);
    }
    Ok(x)
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    pub fn random_spd(seed: u64, n: usize) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, n, n);
        let mut a = m.inner_gram();
        for v in a.values.iter_mut() {
            *v /= n as f64;
        }
        a.add_diagonal(0.5);
        a
    }

    pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lstsq_identity() {
        let x = min_norm_least_squares(&DenseMatrix::identity(2), &[3.0, -1.0], DEFAULT_RANK_TOL)
            .unwrap();
        assert!(close(&x, &[3.0, -1.0], 1e-14));
    }

    #[test]
    fn lstsq_rank_deficient_zeroes_null_direction() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let x = min_norm_least_squares(&a, &[2.0, 3.0], DEFAULT_RANK_TOL).unwrap();
        assert!(close(&x, &[2.0, 0.0], 1e-14));
    }

    #[test]
    fn lstsq_column_vector() {
        // normal equations: (AᵀA) x = Aᵀb → 2x = 2
        let a = DenseMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let x = min_norm_least_squares(&a, &[1.0, 1.0], DEFAULT_RANK_TOL).unwrap();
        assert!(close(&x, &[1.0], 1e-14));
    }

    #[test]
    fn lstsq_rejects_bad_input() {
        let empty = DenseMatrix::zeros(0, 3);
        assert_eq!(
            min_norm_least_squares(&empty, &[], DEFAULT_RANK_TOL),
            Err(GmpError::Empty("least-squares matrix"))
        );
        assert!(matches!(
            min_norm_least_squares(
                &DenseMatrix::identity(2),
                &[1.0, f64::NAN],
                DEFAULT_RANK_TOL
            ),
            Err(GmpError::NonFinite(_))
        ));
        assert!(DenseMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn spd_examples() {
        let x = solve_spd(&DenseMatrix::identity(3), &[1.0, -2.0, 5.0]).unwrap();
        assert!(close(&x, &[1.0, -2.0, 5.0], 1e-15));
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = solve_spd(&a, &[1.0, 1.0]).unwrap();
        assert!(close(&x, &[1.0 / 3.0, 1.0 / 3.0], 1e-15));
        let x = solve_spd(&DenseMatrix::diagonal(&[4.0]).unwrap(), &[8.0]).unwrap();
        assert!(close(&x, &[2.0], 1e-15));
    }

    #[test]
    fn spd_reports_failing_pivot() {
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 2.0, 1.0],
        ])
        .unwrap();
        assert_eq!(
            solve_spd(&a, &[1.0, 1.0, 1.0]),
            Err(GmpError::NotPositiveDefinite { pivot: 2 })
        );
    }

    #[test]
    fn spd_symmetry_rule() {
        let slightly = DenseMatrix::from_rows(&[vec![2.0, 1.0 + 1e-14], vec![1.0, 2.0]]).unwrap();
        assert!(solve_spd(&slightly, &[1.0, 1.0]).is_ok());
        let skewed = DenseMatrix::from_rows(&[vec![2.0, 1.1], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            solve_spd(&skewed, &[1.0, 1.0]),
            Err(GmpError::NotSymmetric(_))
        ));
    }

    #[test]
    fn spd_relative_residual() {
        let a = random_spd(3, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_vec(&mut rng, 60);
        let x = solve_spd(&a, &b).unwrap();
        assert!(relative_difference(&a.matvec(&x), &b) <= 1e-10);
    }

    #[test]
    fn cg_identity_one_iteration() {
        let b = vec![1.0, 2.0, 3.0];
        let (x, report) = conjugate_gradient(|v| v.to_vec(), &b, 1e-12, 3).unwrap();
        assert!(close(&x, &b, 1e-15));
        assert!(report.converged);
        assert!(report.iterations <= 1);
    }

    #[test]
    fn cg_two_by_two() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (x, report) = conjugate_gradient(|v| a.matvec(v), &[1.0, 1.0], 1e-10, 2).unwrap();
        assert!(report.converged);
        assert!(close(&x, &[1.0 / 3.0, 1.0 / 3.0], 1e-12));
    }

    #[test]
    fn cg_matches_direct_on_random_spd() {
        let a = random_spd(11, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = random_vec(&mut rng, 50);
        let direct = solve_spd(&a, &b).unwrap();
        let (x, report) = conjugate_gradient(|v| a.matvec(v), &b, 1e-12, 50).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(relative_difference(&x, &direct) <= 1e-8);
    }

    #[test]
    fn cg_flags_non_convergence() {
        let a = random_spd(5, 40);
        let b = vec![1.0; 40];
        let (x, report) = conjugate_gradient(|v| a.matvec(v), &b, 1e-14, 2).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 2);
        assert_eq!(x.len(), 40);
        assert!(report.residual_norm < norm(&b));
    }

    #[test]
    fn block_examples() {
        let single = random_spd(1, 5);
        let b = vec![1.0, -1.0, 0.5, 2.0, 0.0];
        let bd = BlockDiagonalMatrix::new(vec![single.clone()]).unwrap();
        assert_eq!(
            solve_block_diagonal(&bd, &b).unwrap(),
            solve_spd(&single, &b).unwrap()
        );

        let bd = BlockDiagonalMatrix::new(vec![
            DenseMatrix::diagonal(&[2.0]).unwrap(),
            DenseMatrix::diagonal(&[4.0]).unwrap(),
        ])
        .unwrap();
        assert!(close(
            &solve_block_diagonal(&bd, &[2.0, 8.0]).unwrap(),
            &[1.0, 2.0],
            1e-15
        ));
    }

    #[test]
    fn block_reports_block_index() {
        let bad = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let bd = BlockDiagonalMatrix::new(vec![DenseMatrix::identity(2), bad]).unwrap();
        assert_eq!(
            solve_block_diagonal(&bd, &[1.0; 4]),
            Err(GmpError::BlockNotPositiveDefinite { block: 1, pivot: 1 })
        );
        assert!(BlockDiagonalMatrix::new(vec![DenseMatrix::zeros(2, 3)]).is_err());
    }

    #[test]
    fn four_block_matches_dense_assembly() {
        let blocks: Vec<_> = [3usize, 1, 4, 2]
            .iter()
            .enumerate()
            .map(|(k, &n)| random_spd(100 + k as u64, n))
            .collect();
        let bd = BlockDiagonalMatrix::new(blocks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_vec(&mut rng, bd.dim());
        let x = solve_block_diagonal(&bd, &b).unwrap();
        let dense = solve_spd(&bd.to_dense(), &b).unwrap();
        assert!(relative_difference(&x, &dense) <= 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn min_norm_beats_basic_solution(seed in 0u64..10_000, m in 3usize..12, n in 3usize..12, r in 1usize..3) {
            // A = B C has rank r; a basic LS solution uses r generic columns,
            // solved through the normal equations.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bm = random_matrix(&mut rng, m, r);
            let cm = random_matrix(&mut rng, r, n);
            let a = bm.matmul(&cm);
            let b = random_vec(&mut rng, m);
            let x = min_norm_least_squares(&a, &b, DEFAULT_RANK_TOL).unwrap();

            let sub = DenseMatrix::from_fn(m, r, |i, j| a.get(i, j)).unwrap();
            let g = sub.inner_gram();
            let rhs = sub.matvec_transposed(&b);
            let y_sub = solve_spd(&g, &rhs).unwrap();
            let mut y = vec![0.0; n];
            y[..r].copy_from_slice(&y_sub);

            let res_x = relative_difference(&a.matvec(&x), &b);
            let res_y = relative_difference(&a.matvec(&y), &b);
            prop_assert!((res_x - res_y).abs() <= 1e-7 * (1.0 + res_y));
            prop_assert!(norm(&x) <= norm(&y) + 1e-9);
        }

        #[test]
        fn pinv_matches_normal_equations(seed in 0u64..10_000, m in 4usize..15, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, m, n);
            let b = random_vec(&mut rng, m);
            let x = min_norm_least_squares(&a, &b, DEFAULT_RANK_TOL).unwrap();
            let y = solve_spd(&a.inner_gram(), &a.matvec_transposed(&b)).unwrap();
            prop_assert!(relative_difference(&x, &y) <= 1e-9);
        }

        #[test]
        fn cg_equals_direct(seed in 0u64..10_000, n in 1usize..=200) {
            let a = random_spd(seed, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let b = random_vec(&mut rng, n);
            let direct = solve_spd(&a, &b).unwrap();
            let (x, _) = conjugate_gradient(|v| a.matvec(v), &b, 1e-12, n).unwrap();
            prop_assert!(relative_difference(&x, &direct) <= 1e-8);
        }

        #[test]
        fn block_equals_dense(seed in 0u64..10_000, sizes in proptest::collection::vec(1usize..6, 1..6)) {
            let blocks: Vec<_> = sizes.iter().enumerate()
                .map(|(k, &n)| random_spd(seed * 31 + k as u64, n))
                .collect();
            let bd = BlockDiagonalMatrix::new(blocks).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_vec(&mut rng, bd.dim());
            let x = solve_block_diagonal(&bd, &b).unwrap();
            let dense = solve_spd(&bd.to_dense(), &b).unwrap();
            prop_assert!(relative_difference(&x, &dense) <= 1e-12);
        }
    }
}
