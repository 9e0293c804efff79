//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! For `m >= n` the columns of a working copy of `A` are rotated pairwise
//! until they are mutually orthogonal; the accumulated rotations form `V`,
//! the column norms are the singular values and the normalized columns are
//! `U`. Wide inputs are handled through the transpose. Sweeps are cyclic in
//! a fixed `(p, q)` order, so the result is a deterministic function of the
//! input.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Relative off-diagonal threshold `|cᵖ·cᵠ| <= TOL ‖cᵖ‖‖cᵠ‖`.
pub const JACOBI_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

/// `A = U · diag(sigma) · Vt` with `k = min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × k`, orthonormal columns.
    pub u: Matrix,
    /// `k` values, non-negative and non-increasing.
    pub sigma: Vec<f64>,
    /// `k × n`, orthonormal rows.
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (v, s) in us.row_mut(r).iter_mut().zip(&self.sigma) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformant")
    }

    /// Numerical rank relative to the largest singular value.
    pub fn rank(&self, rcond: f64) -> usize {
        let cutoff = rcond * self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().filter(|&&s| s > cutoff && s > 0.0).count()
    }
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("svd of empty {m}x{n} matrix")));
    }
    a.ensure_finite("svd input")?;

    let mut out = if m >= n {
        svd_tall(a)?
    } else {
        let t = svd_tall(&a.transpose())?;
        Svd {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        }
    };
    fix_signs(&mut out);
    Ok(out)
}

/// Columns of a matrix stored contiguously, for cache-friendly rotations.
fn columns(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.cols()).map(|c| a.col(c)).collect()
}

fn svd_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    let mut w = columns(a);
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();

    let mut converged = n == 1;
    let mut residual = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0 || scale == 0.0 || !scale.is_normal() {
                    continue;
                }
                let off = gamma.abs() / scale;
                residual = f64::max(residual, off);
                if off <= JACOBI_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            rows: m,
            cols: n,
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let smax = norms[order[0]];
    let zero_tol = smax * (m.max(n) as f64) * f64::EPSILON;

    let mut sigma = Vec::with_capacity(n);
    let mut ucols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        if s > zero_tol && s > 0.0 {
            sigma.push(s);
            ucols.push(Some(w[j].iter().map(|x| x / s).collect()));
        } else {
            sigma.push(0.0);
            ucols.push(None);
        }
    }
    let ucols = complete_basis(ucols, m);

    let u = Matrix::from_fn(m, n, |r, c| ucols[c][r]);
    let vt = Matrix::from_fn(n, n, |r, c| v[order[r]][c]);
    Ok(Svd { u, sigma, vt })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills missing columns with unit vectors orthogonal to the present ones.
/// Each gap takes the standard basis vector with the largest component
/// outside the current span (lowest index on ties).
fn complete_basis(cols: Vec<Option<Vec<f64>>>, m: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(cols.len());
    for col in cols {
        if let Some(c) = col {
            out.push(c);
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for candidate in 0..m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let d = dot(&e, b);
                    for (x, y) in e.iter_mut().zip(b) {
                        *x -= d * y;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|(n, _)| nrm > *n) {
                best = Some((nrm, e));
            }
        }
        let (nrm, mut e) = best.expect("m >= 1");
        assert!(nrm > 0.0, "basis completion needs more rows than basis vectors");
        e.iter_mut().for_each(|x| *x /= nrm);
        basis.push(e.clone());
        out.push(e);
    }
    out
}

/// Makes the largest-magnitude entry of each left singular vector positive.
fn fix_signs(svd: &mut Svd) {
    let k = svd.sigma.len();
    for j in 0..k {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..svd.u.rows() {
            let a = svd.u[(r, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if svd.u[(best, j)] < 0.0 {
            for r in 0..svd.u.rows() {
                svd.u[(r, j)] = -svd.u[(r, j)];
            }
            for x in svd.vt.row_mut(j) {
                *x = -*x;
            }
        }
    }
}
