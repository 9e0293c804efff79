use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{dim_err, Error, Result};
use crate::exec::Exec;

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for v in self.row(r).iter().take(8) {
                write!(f, "{v:>12.5e} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return dim_err(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) of {rows}x{cols} matrix",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return dim_err("ragged rows");
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} ({}x{})", self.rows, self.cols)))
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        self.matmul_with(rhs, Exec::default())
    }

    pub fn matmul_with(&self, rhs: &Matrix, exec: Exec) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return dim_err(format!(
                "matmul {}x{} · {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; n * m];
        exec.for_work(n * k * m).for_each_chunk(&mut out, m, |i, orow| {
            let arow = &self.data[i * k..(i + 1) * k];
            for (p, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        });
        Ok(Matrix::from_raw(n, m, out))
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        self.t_matmul_with(rhs, Exec::default())
    }

    pub fn t_matmul_with(&self, rhs: &Matrix, exec: Exec) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return dim_err(format!(
                "t_matmul ({}x{})ᵀ · {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let (k, n, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; n * m];
        let exec = exec.for_work(n * k * m);
        if !exec.is_parallel() {
            // one streaming pass over both inputs; per-entry summation order
            // matches the row-parallel path below
            for p in 0..k {
                let arow = &self.data[p * n..(p + 1) * n];
                let brow = &rhs.data[p * m..(p + 1) * m];
                for (i, &a) in arow.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (o, &b) in out[i * m..(i + 1) * m].iter_mut().zip(brow) {
                        *o += a * b;
                    }
                }
            }
            return Ok(Matrix::from_raw(n, m, out));
        }
        exec.for_each_chunk(&mut out, m, |i, orow| {
            for p in 0..k {
                let a = self.data[p * n + i];
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        });
        Ok(Matrix::from_raw(n, m, out))
    }

    /// `self · rhsᵀ` (row-by-row dot products).
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        self.matmul_t_with(rhs, Exec::default())
    }

    pub fn matmul_t_with(&self, rhs: &Matrix, exec: Exec) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return dim_err(format!(
                "matmul_t {}x{} · ({}x{})ᵀ",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        // the row-axpy kernel vectorizes and skips zeros; summation order per
        // entry is the same as a left-to-right dot product
        self.matmul_with(&rhs.transpose(), exec)
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// `self + alpha · rhs`.
    pub fn add_scaled(&self, rhs: &Matrix, alpha: f64) -> Result<Matrix> {
        self.zip_with(rhs, "add_scaled", |a, b| a + alpha * b)
    }

    fn zip_with(&self, rhs: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return dim_err(format!("{op} {}x{} vs {}x{}", self.rows, self.cols, rhs.rows, rhs.cols));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference; `inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Copies `self` into the top-left corner of a `rows x cols` zero matrix.
    pub fn embed_top_left(&self, rows: usize, cols: usize) -> Result<Matrix> {
        if rows < self.rows || cols < self.cols {
            return dim_err(format!("cannot embed {}x{} into {rows}x{cols}", self.rows, self.cols));
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..self.rows {
            out.row_mut(r)[..self.cols].copy_from_slice(self.row(r));
        }
        Ok(out)
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_range(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_raw(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// `v · self` for a row vector `v` (length `rows`).
    pub fn vec_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return dim_err(format!("vector of {} times {}x{}", v.len(), self.rows, self.cols));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &a) in v.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.row(r)) {
                *o += a * b;
            }
        }
        Ok(out)
    }

    /// Column-major vectorization.
    pub fn vec_col_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self[(r, c)]);
            }
        }
        out
    }

    /// Inverse of [`Matrix::vec_col_major`].
    pub fn from_col_major(rows: usize, cols: usize, v: &[f64]) -> Result<Matrix> {
        if v.len() != rows * cols {
            return dim_err(format!("{} values for {rows}x{cols}", v.len()));
        }
        Ok(Matrix::from_fn(rows, cols, |r, c| v[c * rows + r]))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    Matrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(Matrix::from_vec(2, 2, vec![1.0; 3]), Err(Error::Dimension(_))));
        assert!(matches!(
            Matrix::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn products_agree() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, -1.0]]);
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab, m(&[&[7.0, -1.0], &[16.0, -1.0]]));
        assert_eq!(a.transpose().t_matmul(&b).unwrap(), ab);
        assert_eq!(a.matmul_t(&b.transpose()).unwrap(), ab);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn parallel_matmul_is_bitwise_sequential() {
        let a = Matrix::from_fn(70, 50, |i, j| ((i * 31 + j * 17) % 13) as f64 / 7.0 - 0.9);
        let b = Matrix::from_fn(50, 40, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.1);
        assert_eq!(
            a.matmul_with(&b, Exec::Sequential).unwrap(),
            a.matmul_with(&b, Exec::Parallel).unwrap()
        );
        let c = Matrix::from_fn(70, 40, |i, j| ((i * 5 + j * 13) % 17) as f64 / 3.0 - 2.0);
        assert_eq!(
            a.t_matmul_with(&c, Exec::Sequential).unwrap(),
            a.t_matmul_with(&c, Exec::Parallel).unwrap()
        );
        assert_eq!(
            a.t_matmul_with(&c, Exec::Sequential).unwrap(),
            a.transpose().matmul_with(&c, Exec::Sequential).unwrap()
        );
        assert_eq!(
            b.transpose().matmul_t_with(&a, Exec::Sequential).unwrap(),
            b.transpose().matmul_t_with(&a, Exec::Parallel).unwrap()
        );
    }

    #[test]
    fn kron_and_vec_identity() {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        let a = m(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.0]]);
        let x = m(&[&[1.0, -2.0, 0.0], &[2.0, 1.0, 3.0]]);
        let b = m(&[&[1.0, 0.0], &[2.0, 1.0], &[-1.0, 4.0]]);
        let lhs = a.matmul(&x).unwrap().matmul(&b).unwrap().vec_col_major();
        let k = kron(&b.transpose(), &a);
        let rhs = k
            .matmul(&Matrix::from_vec(6, 1, x.vec_col_major()).unwrap())
            .unwrap()
            .into_vec();
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_keeps_norm() {
        let a = m(&[&[5.0]]);
        let e = a.embed_top_left(2, 2).unwrap();
        assert_eq!(e, m(&[&[5.0, 0.0], &[0.0, 0.0]]));
        assert!(a.embed_top_left(0, 1).is_err());
    }
}
