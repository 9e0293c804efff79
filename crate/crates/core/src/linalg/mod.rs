//! Dense linear algebra used by every other module: matrix arithmetic,
//! Jacobi SVD, pseudo-inverse, Cholesky/Tikhonov solves and seeded
//! orthonormal sampling.

mod matrix;
mod random;
mod solve;
mod svd;

pub use matrix::{dot, kron, norm2, Matrix};
pub use random::{gaussian_matrix, gaussian_vec, random_orthonormal_rows};
pub use solve::{cholesky, cholesky_solve, pseudo_inverse, qr_r_factor, tikhonov_solve, DEFAULT_RCOND};
pub use svd::{svd, Svd, JACOBI_TOL, MAX_SWEEPS};
