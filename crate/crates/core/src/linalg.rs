//! Small dense linear algebra over [`Real`] scalars.
//!
//! Everything here is row-major and sized for the desk-scale problems this
//! crate deals with (a few hundred rows). Products go through [`Real::gemm`].

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given equal-length slices.
    pub fn from_columns(columns: &[&[T]]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    found: col.len(),
                });
            }
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Sub-matrix with the given row and column indices, in order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut m = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m[(a, b)] = self[(i, j)];
            }
        }
        m
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        T::gemm(
            self.rows,
            self.cols,
            rhs.cols,
            &self.data,
            &rhs.data,
            &mut out.data,
        );
        out
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product `sum_ij a_ij b_ij`, equal to `Tr[A B]` when one side is symmetric.
    pub fn frobenius_dot(&self, rhs: &Self) -> T {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data.iter().zip(&rhs.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> T {
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (self[(i, j)] + self[(j, i)]) * T::lit(0.5);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Double centering `H K H` with `H = I - 11'/n`.
    pub fn double_center(&mut self) {
        let n = self.rows;
        assert_eq!(n, self.cols);
        if n == 0 {
            return;
        }
        let nf = T::from_usize(n).unwrap();
        let row_means: Vec<T> = (0..n)
            .map(|i| self.row(i).iter().copied().sum::<T>() / nf)
            .collect();
        let mut col_means = vec![T::zero(); n];
        for i in 0..n {
            for (c, &v) in col_means.iter_mut().zip(self.row(i)) {
                *c += v;
            }
        }
        col_means.iter_mut().for_each(|c| *c /= nf);
        let grand = row_means.iter().copied().sum::<T>() / nf;
        for i in 0..n {
            let rm = row_means[i];
            let row = &mut self.data[i * n..(i + 1) * n];
            for (v, &cm) in row.iter_mut().zip(&col_means) {
                *v = *v - rm - cm + grand;
            }
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// A pivot not exceeding the tolerance times the largest diagonal entry is
/// reported as singular.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "cholesky needs a square matrix");
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(T::zero(), T::max);
    let tol = T::pivot_tolerance() * max_diag;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let dot: T = {
                let (li, lj) = (&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                li.iter().zip(lj).map(|(&x, &y)| x * y).sum()
            };
            let s = a[(i, j)] - dot;
            if i == j {
                if !(s > tol) {
                    return Err(Error::Singular {
                        index: i,
                        pivot: s.to_f64_lossy(),
                    });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
fn lower_inverse<T: Real>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    // Row-major forward substitution on the transposed system keeps the
    // inner loop contiguous: column j of L^{-1} is stored as row j of `inv_t`.
    let mut inv_t = Matrix::zeros(n, n);
    for j in 0..n {
        let row = &mut inv_t.data[j * n..(j + 1) * n];
        row[j] = T::one() / l[(j, j)];
        for i in (j + 1)..n {
            let li = &l.data[i * n + j..i * n + i];
            let s: T = li.iter().zip(&row[j..i]).map(|(&a, &b)| a * b).sum();
            row[i] = -s / l[(i, i)];
        }
    }
    inv_t.transpose()
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let l = cholesky(a)?;
    let linv = lower_inverse(&l);
    let mut inv = linv.transpose().matmul(&linv);
    inv.symmetrize();
    Ok(inv)
}

/// Solves `L L' x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let s: T = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (y[i] - s) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let s: T = ((i + 1)..n).map(|k| l[(k, i)] * y[k]).sum();
        y[i] = (y[i] - s) / l[(i, i)];
    }
    y
}

/// Sample covariance of the columns with the `1/(N-1)` normalization.
pub fn covariance<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let (n, m) = (x.rows(), x.cols());
    let nf = T::from_usize(n).unwrap();
    let means: Vec<T> = (0..m)
        .map(|j| (0..n).map(|i| x[(i, j)]).sum::<T>() / nf)
        .collect();
    let mut centered = x.clone();
    for i in 0..n {
        for j in 0..m {
            centered[(i, j)] -= means[j];
        }
    }
    let mut cov = centered.transpose().matmul(&centered);
    let denom = T::from_usize(n.saturating_sub(1).max(1)).unwrap();
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= denom);
    cov.symmetrize();
    cov
}

/// Ordinary least squares fit.
#[derive(Clone, Debug)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<T>,
    pub rss: T,
}

/// Least squares `min ||X b - y||` by Householder QR.
///
/// Fails with `Singular` when a diagonal entry of `R` is negligible relative
/// to the largest one, i.e. the design is numerically rank deficient.
pub fn least_squares<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<LeastSquares<T>> {
    let (n, k) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n < k {
        return Err(Error::InsufficientSamples {
            available: n,
            required: k,
        });
    }
    // Column-major working copy so each Householder step touches contiguous memory.
    let mut a: Vec<Vec<T>> = (0..k).map(|j| x.column(j)).collect();
    let mut rhs = y.to_vec();
    let mut diag = vec![T::zero(); k];
    let col_norms: Vec<T> = a
        .iter()
        .map(|c| c.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    for j in 0..k {
        let norm = a[j][j..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            diag[j] = T::zero();
            continue;
        }
        let alpha = if a[j][j] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&t| t * t).sum();
        if vnorm2 > T::zero() {
            for col in a.iter_mut().skip(j) {
                let dot: T = v.iter().zip(&col[j..]).map(|(&p, &q)| p * q).sum();
                let f = T::lit(2.0) * dot / vnorm2;
                for (c, &vv) in col[j..].iter_mut().zip(&v) {
                    *c -= f * vv;
                }
            }
            let dot: T = v.iter().zip(&rhs[j..]).map(|(&p, &q)| p * q).sum();
            let f = T::lit(2.0) * dot / vnorm2;
            for (c, &vv) in rhs[j..].iter_mut().zip(&v) {
                *c -= f * vv;
            }
        }
        diag[j] = a[j][j];
    }
    let scale = col_norms.iter().copied().fold(T::zero(), T::max);
    let tol = T::pivot_tolerance().sqrt() * scale;
    for (j, &d) in diag.iter().enumerate() {
        if !(d.abs() > tol) {
            return Err(Error::Singular {
                index: j,
                pivot: d.to_f64_lossy(),
            });
        }
    }
    let mut beta = vec![T::zero(); k];
    for i in (0..k).rev() {
        let s: T = ((i + 1)..k).map(|j| a[j][i] * beta[j]).sum();
        beta[i] = (rhs[i] - s) / a[i][i];
    }
    let rss: T = rhs[k..].iter().map(|&r| r * r).sum();
    Ok(LeastSquares {
        coefficients: beta,
        rss,
    })
}
