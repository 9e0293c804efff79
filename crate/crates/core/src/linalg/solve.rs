use super::matrix::Matrix;
use super::svd::svd;
use crate::error::{dim_err, Error, Result};

/// Default relative singular-value cutoff for [`pseudo_inverse`].
pub const DEFAULT_RCOND: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse by truncated SVD. Singular values at or
/// below `rcond · σ_max` are treated as zero.
pub fn pseudo_inverse(a: &Matrix, rcond: f64) -> Result<Matrix> {
    if !(rcond >= 0.0) {
        return Err(Error::InvalidArgument(format!("rcond must be >= 0, got {rcond}")));
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    let s = svd(a)?;
    let cutoff = rcond * s.sigma[0];
    // A† = V Σ⁺ Uᵀ
    let mut vs = s.vt.transpose();
    for r in 0..vs.rows() {
        for (x, &sg) in vs.row_mut(r).iter_mut().zip(&s.sigma) {
            *x = if sg > cutoff && sg > 0.0 { *x / sg } else { 0.0 };
        }
    }
    vs.matmul_t(&s.u)
}

/// Cholesky factor `L` (lower triangular) with `A = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return dim_err(format!("cholesky of non-square {}x{}", n, a.cols()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    if b.rows() != n {
        return dim_err(format!("rhs has {} rows, system has {n}", b.rows()));
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// `(gram + λI)⁻¹ · rhs` for symmetric `gram` and `λ > 0`.
pub fn tikhonov_solve(gram: &Matrix, rhs: &Matrix, lambda: f64) -> Result<Matrix> {
    if gram.rows() != gram.cols() {
        return dim_err(format!("gram must be square, got {}x{}", gram.rows(), gram.cols()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    if rhs.rows() != gram.rows() {
        return dim_err(format!(
            "rhs has {} rows, gram is {}x{}",
            rhs.rows(),
            gram.rows(),
            gram.cols()
        ));
    }
    let mut reg = gram.clone();
    for i in 0..reg.rows() {
        reg[(i, i)] += lambda;
    }
    let l = cholesky(&reg)?;
    cholesky_solve(&l, rhs)
}

/// `R` factor of a Householder QR of `a` (`min(m,n) × n`, upper triangular).
/// `‖X Aᵀ‖_F = ‖X Rᵀ‖_F` for any conformant `X`.
pub fn qr_r_factor(a: &Matrix) -> Matrix {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let k = m.min(n);
    for j in 0..k {
        let norm: f64 = (j..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if w[(j, j)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| w[(i, j)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j..n {
            let d: f64 = (j..m).zip(&v).map(|(i, vi)| vi * w[(i, c)]).sum();
            let f = 2.0 * d / vnorm2;
            for (i, vi) in (j..m).zip(&v) {
                w[(i, c)] -= f * vi;
            }
        }
    }
    Matrix::from_fn(k, n, |i, j| if j >= i { w[(i, j)] } else { 0.0 })
}
