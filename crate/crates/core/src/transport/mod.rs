//! Procrustes-conditioned transport of task vectors.
//!
//! Given flattened, token-paired activations of a layer in a source model
//! `A` and a target model `B`, the input and output spaces are aligned by two
//! orthogonal Procrustes problems
//!
//! ```text
//! T_in  = argmin ‖H_in,A T − H_in,B‖_F    T_out = argmin ‖H_out,A T − H_out,B‖_F
//! ```
//!
//! over semi-orthogonal `d_A × d_B` matrices. Each is solved in closed form
//! as `U Vᵀ` from the thin SVD of the cross-covariance `H_Aᵀ H_B`. The update
//! then moves as `τ_B = T_outᵀ τ_A T_in`, which has the target layer's shape
//! `d_out,B × d_in,B` and the same Frobenius norm as `τ_A` whenever the maps
//! have orthonormal rows.

mod depth;
mod pipeline;
mod residual;

pub use depth::depth_expand;
pub use pipeline::{
    transport_model, transport_model_with, transport_task_vector, transport_task_vector_with, LayerReport, Method,
    TransportConfig, TransportReport, DEFAULT_TIKHONOV_LAMBDA,
};
pub use residual::{bilinear_residual, bilinear_residual_explicit, bilinear_residual_factorized, EXPLICIT_MAX_ROWS};

use crate::error::{dim_err, Result};
use crate::linalg::{svd, Matrix};

/// Input and output alignment maps of one layer.
///
/// `t_in` is `d_in,A × d_in,B` and `t_out` is `d_out,A × d_out,B`. When the
/// source side is the narrower one the maps have orthonormal rows; when it is
/// wider they have orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesMap {
    pub t_in: Matrix,
    pub t_out: Matrix,
    /// `‖H_in,A T_in − H_in,B‖_F` at the optimum.
    pub in_residual: f64,
    /// `‖H_out,A T_out − H_out,B‖_F` at the optimum.
    pub out_residual: f64,
}

/// `h_aᵀ · h_b`.
pub fn cross_covariance(h_a: &Matrix, h_b: &Matrix) -> Result<Matrix> {
    if h_a.rows() != h_b.rows() {
        return dim_err(format!(
            "cross-covariance needs paired rows, got {} and {}",
            h_a.rows(),
            h_b.rows()
        ));
    }
    h_a.t_matmul(h_b)
}

/// Closed-form orthogonal Procrustes map `argmin ‖h_a T − h_b‖_F` and its
/// residual. Works for either width ordering: the thin SVD of `h_aᵀ h_b`
/// gives the same `U Vᵀ` as solving the role-swapped problem and
/// transposing.
pub fn procrustes(h_a: &Matrix, h_b: &Matrix) -> Result<(Matrix, f64)> {
    let c = cross_covariance(h_a, h_b)?;
    let s = svd(&c)?;
    let t = s.u.matmul(&s.vt)?;
    let resid = h_a.matmul(&t)?.sub(h_b)?.frobenius_norm();
    Ok((t, resid))
}

/// Fits both maps of a layer without restricting which side is wider.
pub fn fit_maps(hin_a: &Matrix, hin_b: &Matrix, hout_a: &Matrix, hout_b: &Matrix) -> Result<ProcrustesMap> {
    let (t_in, in_residual) = procrustes(hin_a, hin_b)?;
    let (t_out, out_residual) = procrustes(hout_a, hout_b)?;
    Ok(ProcrustesMap {
        t_in,
        t_out,
        in_residual,
        out_residual,
    })
}

/// Both maps for a narrow source (`d_A ≤ d_B` per side); the result has
/// orthonormal rows.
pub fn procrustes_maps(hin_a: &Matrix, hin_b: &Matrix, hout_a: &Matrix, hout_b: &Matrix) -> Result<ProcrustesMap> {
    if hin_a.cols() > hin_b.cols() || hout_a.cols() > hout_b.cols() {
        return dim_err(format!(
            "source widths (in {}, out {}) exceed target widths (in {}, out {}); use fit_maps",
            hin_a.cols(),
            hout_a.cols(),
            hin_b.cols(),
            hout_b.cols()
        ));
    }
    fit_maps(hin_a, hin_b, hout_a, hout_b)
}

impl ProcrustesMap {
    /// Identity maps for equal widths.
    pub fn identity(d_in: usize, d_out: usize) -> Self {
        ProcrustesMap {
            t_in: Matrix::identity(d_in),
            t_out: Matrix::identity(d_out),
            in_residual: 0.0,
            out_residual: 0.0,
        }
    }

    /// Maps for the reverse direction `B → A`.
    pub fn reversed(&self) -> Self {
        ProcrustesMap {
            t_in: self.t_in.transpose(),
            t_out: self.t_out.transpose(),
            in_residual: self.in_residual,
            out_residual: self.out_residual,
        }
    }

    pub fn source_shape(&self) -> (usize, usize) {
        (self.t_out.rows(), self.t_in.rows())
    }

    pub fn target_shape(&self) -> (usize, usize) {
        (self.t_out.cols(), self.t_in.cols())
    }
}

/// `τ_B = T_outᵀ τ_A T_in`, shaped `d_out,B × d_in,B`.
pub fn transport_update(tau_a: &Matrix, map: &ProcrustesMap) -> Result<Matrix> {
    if tau_a.shape() != map.source_shape() {
        return dim_err(format!(
            "update is {:?} but maps expect a {:?} source",
            tau_a.shape(),
            map.source_shape()
        ));
    }
    let tau_b = map.t_out.t_matmul(tau_a)?.matmul(&map.t_in)?;
    debug_assert_eq!(tau_b.shape(), map.target_shape());
    Ok(tau_b)
}

/// Bias deltas live in the output space only: `b_B = b_A T_out`.
pub fn transport_bias(bias_a: &[f64], map: &ProcrustesMap) -> Result<Vec<f64>> {
    map.t_out.vec_mul(bias_a)
}
