//! Misfit between the bilinear forms `G = H_in τᵀ H_outᵀ` that two updates
//! induce on paired tokens.

use crate::error::{dim_err, Result};
use crate::linalg::{qr_r_factor, Matrix};

/// Above this many rows the `M × M` forms are never materialized.
pub const EXPLICIT_MAX_ROWS: usize = 512;

fn check_shapes(
    hin_a: &Matrix,
    hout_a: &Matrix,
    hin_b: &Matrix,
    hout_b: &Matrix,
    tau_a: &Matrix,
    tau_b: &Matrix,
) -> Result<()> {
    let m = hin_a.rows();
    if hout_a.rows() != m || hin_b.rows() != m || hout_b.rows() != m {
        return dim_err(format!(
            "activation row counts differ: {}, {}, {}, {}",
            m,
            hout_a.rows(),
            hin_b.rows(),
            hout_b.rows()
        ));
    }
    if tau_a.shape() != (hout_a.cols(), hin_a.cols()) || tau_b.shape() != (hout_b.cols(), hin_b.cols()) {
        return dim_err(format!(
            "updates {:?}/{:?} do not match activation widths",
            tau_a.shape(),
            tau_b.shape()
        ));
    }
    Ok(())
}

/// `‖H_in,A τ_Aᵀ H_out,Aᵀ − H_in,B τ_Bᵀ H_out,Bᵀ‖_F`.
pub fn bilinear_residual(
    hin_a: &Matrix,
    hout_a: &Matrix,
    hin_b: &Matrix,
    hout_b: &Matrix,
    tau_a: &Matrix,
    tau_b: &Matrix,
) -> Result<f64> {
    if hin_a.rows() > EXPLICIT_MAX_ROWS {
        bilinear_residual_factorized(hin_a, hout_a, hin_b, hout_b, tau_a, tau_b)
    } else {
        bilinear_residual_explicit(hin_a, hout_a, hin_b, hout_b, tau_a, tau_b)
    }
}

/// Forms both `M × M` matrices.
pub fn bilinear_residual_explicit(
    hin_a: &Matrix,
    hout_a: &Matrix,
    hin_b: &Matrix,
    hout_b: &Matrix,
    tau_a: &Matrix,
    tau_b: &Matrix,
) -> Result<f64> {
    check_shapes(hin_a, hout_a, hin_b, hout_b, tau_a, tau_b)?;
    let ga = hin_a.matmul_t(tau_a)?.matmul_t(hout_a)?;
    let gb = hin_b.matmul_t(tau_b)?.matmul_t(hout_b)?;
    Ok(ga.sub(&gb)?.frobenius_norm())
}

/// `G_A − G_B = [X_A, −X_B] · [H_out,A, H_out,B]ᵀ` with `X = H_in τᵀ`.
/// Writing the right factor as `Q R`, the norm equals `‖[X_A, −X_B] Rᵀ‖_F`,
/// which costs `O(M d²)` and avoids squaring the activations.
pub fn bilinear_residual_factorized(
    hin_a: &Matrix,
    hout_a: &Matrix,
    hin_b: &Matrix,
    hout_b: &Matrix,
    tau_a: &Matrix,
    tau_b: &Matrix,
) -> Result<f64> {
    check_shapes(hin_a, hout_a, hin_b, hout_b, tau_a, tau_b)?;
    let xa = hin_a.matmul_t(tau_a)?;
    let xb = hin_b.matmul_t(tau_b)?;
    let m = hin_a.rows();
    let (da, db) = (hout_a.cols(), hout_b.cols());
    let x = Matrix::from_fn(m, da + db, |r, c| if c < da { xa[(r, c)] } else { -xb[(r, c - da)] });
    let p = Matrix::from_fn(
        m,
        da + db,
        |r, c| if c < da { hout_a[(r, c)] } else { hout_b[(r, c - da)] },
    );
    let r = qr_r_factor(&p);
    Ok(x.matmul_t(&r)?.frobenius_norm())
}
