//! Dense row-major `f64` matrices with the handful of operations the
//! pipeline needs: products, Gauss–Jordan inversion, and a power-series
//! evaluation of `X + X² + X³ + …` used as an independent check on the
//! inversion route.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pivots whose magnitude falls below this after the partial-pivot search
/// are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Hard cap on the number of power terms summed by [`neumann_total_relation`].
pub const MAX_SERIES_TERMS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("row {row} has {found} entries, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix is singular: no usable pivot in column {column}")]
    Singular { column: usize },
    #[error("power series did not converge after {iterations} terms")]
    Diverged { iterations: usize },
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major storage.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(MatrixError::Ragged {
                    row: i,
                    expected: n_cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.cols.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Row sums, accumulated left to right.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Column sums, accumulated top to bottom.
    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)]).sum())
            .collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute entry; 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Reorders rows and columns together: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert!(self.is_square() && perm.len() == self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| self[(perm[i], perm[j])])
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatrixError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, MatrixError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatrixError::DimensionMismatch {
                op,
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Largest elementwise absolute difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (&a, &b)| acc.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn mat_mul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
    if a.cols != b.rows {
        return Err(MatrixError::DimensionMismatch {
            op: "mat_mul",
            left: (a.rows, a.cols),
            right: (b.rows, b.cols),
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    // i-k-j order keeps the inner loop on contiguous rows of `b` and `out`.
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            let b_row = b.row(k);
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Inverts a square matrix by Gauss–Jordan elimination with partial pivoting.
///
/// Fails with [`MatrixError::Singular`] naming the elimination column when
/// the best available pivot is smaller than [`PIVOT_TOLERANCE`].
pub fn mat_invert(a: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
    if !a.is_square() {
        return Err(MatrixError::NotSquare {
            op: "mat_invert",
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let w = 2 * n;
    // augmented [A | I]
    let mut aug = vec![0.0; n * w];
    for i in 0..n {
        aug[i * w..i * w + n].copy_from_slice(a.row(i));
        aug[i * w + n + i] = 1.0;
    }

    for col in 0..n {
        let (pivot_row, pivot_abs) =
            (col..n)
                .map(|r| (r, aug[r * w + col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot_abs.is_nan() || pivot_abs < PIVOT_TOLERANCE {
            return Err(MatrixError::Singular { column: col });
        }
        if pivot_row != col {
            for k in 0..w {
                aug.swap(col * w + k, pivot_row * w + k);
            }
        }
        let inv_pivot = 1.0 / aug[col * w + col];
        for k in 0..w {
            aug[col * w + k] *= inv_pivot;
        }
        let (before, rest) = aug.split_at_mut(col * w);
        let (pivot, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let factor = row[col];
            if factor != 0.0 {
                for (x, &p) in row.iter_mut().zip(pivot.iter()) {
                    *x -= factor * p;
                }
            }
        }
    }

    let mut inv = DenseMatrix::zeros(n, n);
    for i in 0..n {
        inv.data[i * n..(i + 1) * n].copy_from_slice(&aug[i * w + n..(i + 1) * w]);
    }
    Ok(inv)
}

/// Sums `X + X² + X³ + …`, stopping before the first power whose max-norm
/// is below `tol`.
///
/// This is the series form of `X (I − X)⁻¹`; it only converges when the
/// spectral radius of `X` is below one. Kept public so tests can check the
/// inversion route against it.
pub fn neumann_total_relation(x: &DenseMatrix, tol: f64) -> Result<DenseMatrix, MatrixError> {
    if !x.is_square() {
        return Err(MatrixError::NotSquare {
            op: "neumann_total_relation",
            rows: x.rows,
            cols: x.cols,
        });
    }
    let mut sum = DenseMatrix::zeros(x.rows, x.cols);
    let mut term = x.clone();
    for _ in 0..MAX_SERIES_TERMS {
        let norm = term.max_abs();
        if !norm.is_finite() {
            break;
        }
        if norm < tol {
            return Ok(sum);
        }
        for (s, &t) in sum.data.iter_mut().zip(&term.data) {
            *s += t;
        }
        term = mat_mul(&term, x)?;
    }
    Err(MatrixError::Diverged {
        iterations: MAX_SERIES_TERMS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_is_left_neutral() {
        let a = m(&[&[1.0, -2.0, 3.5], &[0.25, 4.0, -1.0], &[7.0, 0.0, 2.0]]);
        assert_eq!(mat_mul(&DenseMatrix::identity(3), &a).unwrap(), a);
    }

    #[test]
    fn two_by_two_product() {
        let x = m(&[&[0.0, 0.5], &[0.5, 0.0]]);
        assert_eq!(mat_mul(&x, &x).unwrap(), m(&[&[0.25, 0.0], &[0.0, 0.25]]));
    }

    #[test]
    fn product_shape_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            mat_mul(&a, &a),
            Err(MatrixError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invert_identity_and_diagonal() {
        let i4 = DenseMatrix::identity(4);
        assert_eq!(mat_invert(&i4).unwrap(), i4);
        let d = m(&[&[2.0, 0.0], &[0.0, 4.0]]);
        assert_eq!(mat_invert(&d).unwrap(), m(&[&[0.5, 0.0], &[0.0, 0.25]]));
    }

    #[test]
    fn invert_needs_pivoting() {
        // zero in the leading position
        let a = m(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let inv = mat_invert(&a).unwrap();
        let prod = mat_mul(&a, &inv).unwrap();
        assert!(prod.max_abs_diff(&DenseMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn duplicated_row_is_singular() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]]);
        assert!(matches!(mat_invert(&a), Err(MatrixError::Singular { .. })));
    }

    #[test]
    fn invert_rejects_rectangular() {
        assert!(matches!(
            mat_invert(&DenseMatrix::zeros(2, 3)),
            Err(MatrixError::NotSquare { .. })
        ));
    }

    #[test]
    fn series_of_zero_is_zero() {
        let z = DenseMatrix::zeros(3, 3);
        assert_eq!(neumann_total_relation(&z, 1e-12).unwrap(), z);
    }

    #[test]
    fn series_two_by_two_closed_form() {
        // X = [[0, 1/2], [1/2, 0]]: even powers are (1/4)^k I, odd powers (1/4)^k X,
        // so the sum is (1/3) I + (2/3) J-I.
        let x = m(&[&[0.0, 0.5], &[0.5, 0.0]]);
        let t = neumann_total_relation(&x, 1e-12).unwrap();
        let expected = m(&[&[1.0 / 3.0, 2.0 / 3.0], &[2.0 / 3.0, 1.0 / 3.0]]);
        assert!(t.max_abs_diff(&expected) < 1e-11);

        let closed = mat_mul(
            &mat_invert(&DenseMatrix::identity(2).sub(&x).unwrap()).unwrap(),
            &x,
        )
        .unwrap();
        assert!(closed.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn series_diverges_at_unit_spectral_radius() {
        let x = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(
            neumann_total_relation(&x, 1e-12),
            Err(MatrixError::Diverged { .. })
        ));
        let x = m(&[&[0.0, 2.0], &[2.0, 0.0]]);
        assert!(matches!(
            neumann_total_relation(&x, 1e-12),
            Err(MatrixError::Diverged { .. })
        ));
    }

    fn square(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = DenseMatrix> {
        prop::collection::vec(lo..hi, n * n)
            .prop_map(move |d| DenseMatrix::from_vec(n, n, d).unwrap())
    }

    fn diagonally_dominant() -> impl Strategy<Value = DenseMatrix> {
        (2usize..=15).prop_flat_map(|n| {
            (
                square(n, -1.0, 1.0),
                prop::collection::vec(prop::bool::ANY, n),
            )
                .prop_map(move |(mut a, signs)| {
                    for i in 0..n {
                        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
                        a[(i, i)] = (off + 1.0) * if signs[i] { 1.0 } else { -1.0 };
                    }
                    a
                })
        })
    }

    fn substochastic() -> impl Strategy<Value = DenseMatrix> {
        (2usize..=12, 0.05f64..=0.95).prop_flat_map(|(n, cap)| {
            square(n, 0.0, 1.0).prop_map(move |mut x| {
                for i in 0..n {
                    x[(i, i)] = 0.0;
                    let s: f64 = x.row(i).iter().sum();
                    if s > 0.0 {
                        for j in 0..n {
                            x[(i, j)] *= cap / s;
                        }
                    }
                }
                x
            })
        })
    }

    proptest! {
        #[test]
        fn product_is_associative(a in square(5, -2.0, 2.0), b in square(5, -2.0, 2.0), c in square(5, -2.0, 2.0)) {
            let left = mat_mul(&mat_mul(&a, &b).unwrap(), &c).unwrap();
            let right = mat_mul(&a, &mat_mul(&b, &c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) <= 1e-9);
        }

        #[test]
        fn inverse_recovers_identity(a in diagonally_dominant()) {
            let inv = mat_invert(&a).unwrap();
            let n = a.n_rows();
            prop_assert!(mat_mul(&a, &inv).unwrap().max_abs_diff(&DenseMatrix::identity(n)) <= 1e-9);
        }

        #[test]
        fn duplicated_row_never_inverts(a in diagonally_dominant(), pick in any::<prop::sample::Index>()) {
            let n = a.n_rows();
            let src = pick.index(n);
            let dst = (src + 1) % n;
            let mut b = a.clone();
            for j in 0..n {
                b[(dst, j)] = a[(src, j)];
            }
            prop_assert!(
                matches!(mat_invert(&b), Err(MatrixError::Singular { .. })),
                "expected Singular"
            );
        }

        #[test]
        fn series_matches_inversion(x in substochastic()) {
            let n = x.n_rows();
            let series = neumann_total_relation(&x, 1e-15).unwrap();
            let inv = mat_invert(&DenseMatrix::identity(n).sub(&x).unwrap()).unwrap();
            let direct = mat_mul(&x, &inv).unwrap();
            prop_assert!(series.max_abs_diff(&direct) <= 1e-9);
        }
    }
}
