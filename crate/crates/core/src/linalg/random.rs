use rand_distr::{Distribution, StandardNormal};

use super::matrix::{dot, Matrix};
use crate::error::{dim_err, Result};
use crate::rng;

/// `rows × cols` matrix of independent standard normal draws.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect();
    Matrix::from_raw(rows, cols, data)
}

pub fn gaussian_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..len).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Seeded `d_small × d_large` matrix `T` with `T Tᵀ = I`.
///
/// Orthonormalizes the columns of a Gaussian `d_large × d_small` draw with
/// twice-iterated modified Gram-Schmidt and returns the transpose.
pub fn random_orthonormal_rows(d_small: usize, d_large: usize, seed: u64) -> Result<Matrix> {
    if d_small > d_large {
        return dim_err(format!(
            "orthonormal rows need d_small <= d_large, got {d_small} > {d_large}"
        ));
    }
    let mut attempt = 0u64;
    loop {
        let g = gaussian_matrix(d_small, d_large, rng::derive(seed, attempt));
        let mut rows: Vec<Vec<f64>> = (0..d_small).map(|r| g.row(r).to_vec()).collect();
        let mut ok = true;
        for i in 0..d_small {
            let before = dot(&rows[i], &rows[i]).sqrt();
            for _ in 0..2 {
                for j in 0..i {
                    let d = dot(&rows[i], &rows[j]);
                    let (done, rest) = rows.split_at_mut(i);
                    for (x, y) in rest[0].iter_mut().zip(&done[j]) {
                        *x -= d * y;
                    }
                }
            }
            let n = dot(&rows[i], &rows[i]).sqrt();
            if n <= 1e-8 * before {
                // numerically dependent draw; resample
                ok = false;
                break;
            }
            rows[i].iter_mut().for_each(|x| *x /= n);
        }
        if ok {
            return Ok(Matrix::from_raw(d_small, d_large, rows.concat()));
        }
        attempt += 1;
    }
}
