//! Minimal dense row-major matrix used by the transfer-operator code.
//!
//! The workloads here are small dense kernels (a few thousand states at
//! most), matrix-vector products inside power iteration and low matrix
//! powers for minorisation search, so a thin local type beats pulling in a
//! full linear algebra stack.

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `y = self * x`, fixed summation order per row.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc = acc + row[j] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// `y = x^T * self` (left product).
    pub fn vecmat(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            let row = self.row(i);
            for j in 0..self.cols {
                y[j] = y[j] + xi * row[j];
            }
        }
        y
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for j in 0..other.cols {
                    dst[j] = dst[j] + a * src[j];
                }
            }
        }
        out
    }

    /// `self^n` by repeated multiplication (small exponents only).
    pub fn pow(&self, n: usize) -> Mat<T> {
        assert_eq!(self.rows, self.cols);
        let mut out = Mat::identity(self.rows);
        for _ in 0..n {
            out = out.matmul(self);
        }
        out
    }
}

/// Weighted inner product `sum_i w_i a_i b_i`.
pub fn dot_w<T: Scalar>(w: &[T], a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for i in 0..w.len() {
        acc = acc + w[i] * a[i] * b[i];
    }
    acc
}

/// Weighted L2 norm.
pub fn norm_w<T: Scalar>(w: &[T], a: &[T]) -> T {
    dot_w(w, a, a).sqrt()
}
