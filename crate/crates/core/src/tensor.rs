use crate::error::{dim_err, Error, Result};
use crate::linalg::Matrix;

/// `N × L × d` activations or inputs, stored token-major: entry
/// `(n, l, f)` lives at `(n·L + l)·d + f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    l: usize,
    d: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize, l: usize, d: usize) -> Self {
        Tensor3 {
            n,
            l,
            d,
            data: vec![0.0; n * l * d],
        }
    }

    pub fn from_vec(n: usize, l: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * l * d {
            return dim_err(format!(
                "{n}x{l}x{d} tensor needs {} values, got {}",
                n * l * d,
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{n}x{l}x{d} tensor")));
        }
        Ok(Tensor3 { n, l, d, data })
    }

    pub fn from_fn(n: usize, l: usize, d: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * l * d);
        for i in 0..n {
            for j in 0..l {
                for k in 0..d {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { n, l, d, data }
    }

    /// Reinterprets an `(N·L) × d` matrix as `N × L × d`.
    pub fn from_matrix(m: Matrix, n: usize, l: usize) -> Result<Self> {
        if m.rows() != n * l {
            return dim_err(format!("{} rows cannot be split into {n}x{l} tokens", m.rows()));
        }
        let d = m.cols();
        Ok(Tensor3 {
            n,
            l,
            d,
            data: m.into_vec(),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.l, self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, n: usize, l: usize, f: usize) -> f64 {
        self.data[(n * self.l + l) * self.d + f]
    }

    #[inline]
    pub fn token(&self, n: usize, l: usize) -> &[f64] {
        let s = (n * self.l + l) * self.d;
        &self.data[s..s + self.d]
    }

    #[inline]
    pub fn token_mut(&mut self, n: usize, l: usize) -> &mut [f64] {
        let s = (n * self.l + l) * self.d;
        &mut self.data[s..s + self.d]
    }

    /// The `(N·L) × d` view with row `n·L + l` equal to token `(n, l)`.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_raw(self.n * self.l, self.d, self.data.clone())
    }

    pub fn into_matrix(self) -> Matrix {
        Matrix::from_raw(self.n * self.l, self.d, self.data)
    }

    /// Samples `indices` (in the given order) as a new tensor.
    pub fn select(&self, indices: &[usize]) -> Tensor3 {
        let stride = self.l * self.d;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        Tensor3 {
            n: indices.len(),
            l: self.l,
            d: self.d,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
