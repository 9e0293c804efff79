//! Comparison methods for task-vector transport.

use crate::error::{dim_err, Error, Result};
use crate::linalg::{gaussian_matrix, gaussian_vec, norm2, pseudo_inverse, tikhonov_solve, Matrix};
use crate::transport::{transport_bias, transport_update, ProcrustesMap};

/// `τ_A` in the top-left block of a `d_out_b × d_in_b` zero matrix.
pub fn zero_pad_update(tau_a: &Matrix, d_out_b: usize, d_in_b: usize) -> Result<Matrix> {
    tau_a.embed_top_left(d_out_b, d_in_b)
}

pub fn zero_pad_bias(bias_a: &[f64], d_out_b: usize) -> Result<Vec<f64>> {
    if d_out_b < bias_a.len() {
        return dim_err(format!("cannot pad a bias of {} into {d_out_b}", bias_a.len()));
    }
    let mut out = bias_a.to_vec();
    out.resize(d_out_b, 0.0);
    Ok(out)
}

fn check_norm(target_norm: f64) -> Result<()> {
    if !(target_norm >= 0.0 && target_norm.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target norm must be finite and non-negative, got {target_norm}"
        )));
    }
    Ok(())
}

/// Seeded Gaussian `d_out_b × d_in_b` matrix rescaled to `target_norm`.
pub fn random_update(d_out_b: usize, d_in_b: usize, target_norm: f64, seed: u64) -> Result<Matrix> {
    check_norm(target_norm)?;
    if target_norm == 0.0 {
        return Ok(Matrix::zeros(d_out_b, d_in_b));
    }
    let g = gaussian_matrix(d_out_b, d_in_b, seed);
    let n = g.frobenius_norm();
    if n == 0.0 {
        return Ok(g);
    }
    Ok(g.scale(target_norm / n))
}

pub fn random_vector(len: usize, target_norm: f64, seed: u64) -> Result<Vec<f64>> {
    check_norm(target_norm)?;
    if target_norm == 0.0 || len == 0 {
        return Ok(vec![0.0; len]);
    }
    let mut v = gaussian_vec(len, seed);
    let s = target_norm / norm2(&v);
    v.iter_mut().for_each(|x| *x *= s);
    Ok(v)
}

/// A random update with `τ_A`'s shape and `target_norm`, moved through the
/// Procrustes maps.
pub fn random_source_transport(
    map: &ProcrustesMap,
    shape: (usize, usize),
    target_norm: f64,
    seed: u64,
) -> Result<Matrix> {
    if shape != map.source_shape() {
        return dim_err(format!(
            "random source shape {shape:?} does not match map source {:?}",
            map.source_shape()
        ));
    }
    transport_update(&random_update(shape.0, shape.1, target_norm, seed)?, map)
}

pub fn random_source_bias(map: &ProcrustesMap, target_norm: f64, seed: u64) -> Result<Vec<f64>> {
    transport_bias(&random_vector(map.t_out.rows(), target_norm, seed)?, map)
}

fn check_activations(hin_a: &Matrix, hout_a: &Matrix, hin_b: &Matrix, hout_b: &Matrix, tau_a: &Matrix) -> Result<()> {
    let m = hin_a.rows();
    if hout_a.rows() != m || hin_b.rows() != m || hout_b.rows() != m {
        return dim_err("paired activations must have equal row counts");
    }
    if tau_a.shape() != (hout_a.cols(), hin_a.cols()) {
        return dim_err(format!(
            "update is {:?}, activations are in {} / out {}",
            tau_a.shape(),
            hin_a.cols(),
            hout_a.cols()
        ));
    }
    Ok(())
}

/// `(H_out,Bᵀ H_out,A) τ_A (H_in,Aᵀ H_in,B)`, the right-hand side of the
/// normal equations, formed from `d × d` cross products only.
fn normal_rhs(hin_a: &Matrix, hout_a: &Matrix, hin_b: &Matrix, hout_b: &Matrix, tau_a: &Matrix) -> Result<Matrix> {
    let c_out = hout_b.t_matmul(hout_a)?;
    let c_in = hin_a.t_matmul(hin_b)?;
    c_out.matmul(tau_a)?.matmul(&c_in)
}

/// Least-squares transport: the update minimizing the bilinear misfit
/// directly, `τ_B = G_out,B† (H_out,Bᵀ H_out,A) τ_A (H_in,Aᵀ H_in,B) G_in,B†`
/// with `G = HᵀH`. Singular values of each Gram below `rcond · σ_max` are
/// discarded.
pub fn pinv_transport(
    hin_a: &Matrix,
    hout_a: &Matrix,
    hin_b: &Matrix,
    hout_b: &Matrix,
    tau_a: &Matrix,
    rcond: f64,
) -> Result<Matrix> {
    check_activations(hin_a, hout_a, hin_b, hout_b, tau_a)?;
    let rhs = normal_rhs(hin_a, hout_a, hin_b, hout_b, tau_a)?;
    let p_out = pseudo_inverse(&hout_b.t_matmul(hout_b)?, rcond)?;
    let p_in = pseudo_inverse(&hin_b.t_matmul(hin_b)?, rcond)?;
    p_out.matmul(&rhs)?.matmul(&p_in)
}

/// [`pinv_transport`] with `(G + λI)⁻¹` in place of each pseudo-inverse.
pub fn tikhonov_transport(
    hin_a: &Matrix,
    hout_a: &Matrix,
    hin_b: &Matrix,
    hout_b: &Matrix,
    tau_a: &Matrix,
    lambda: f64,
) -> Result<Matrix> {
    tikhonov_transport_split(hin_a, hout_a, hin_b, hout_b, tau_a, lambda, lambda)
}

/// Separate ridge strengths for the input and output Grams.
pub fn tikhonov_transport_split(
    hin_a: &Matrix,
    hout_a: &Matrix,
    hin_b: &Matrix,
    hout_b: &Matrix,
    tau_a: &Matrix,
    lambda_in: f64,
    lambda_out: f64,
) -> Result<Matrix> {
    check_activations(hin_a, hout_a, hin_b, hout_b, tau_a)?;
    let rhs = normal_rhs(hin_a, hout_a, hin_b, hout_b, tau_a)?;
    let left = tikhonov_solve(&hout_b.t_matmul(hout_b)?, &rhs, lambda_out)?;
    // X (G_in + λI)⁻¹ = ((G_in + λI)⁻¹ Xᵀ)ᵀ since the Gram is symmetric
    Ok(tikhonov_solve(&hin_b.t_matmul(hin_b)?, &left.transpose(), lambda_in)?.transpose())
}

/// Least-squares map `R = argmin ‖H_out,A R − H_out,B‖_F`, used to carry bias
/// deltas for the pseudo-inverse baselines.
pub fn pinv_output_map(hout_a: &Matrix, hout_b: &Matrix, rcond: f64) -> Result<Matrix> {
    pseudo_inverse(&hout_a.t_matmul(hout_a)?, rcond)?.matmul(&hout_a.t_matmul(hout_b)?)
}

pub fn tikhonov_output_map(hout_a: &Matrix, hout_b: &Matrix, lambda: f64) -> Result<Matrix> {
    tikhonov_solve(&hout_a.t_matmul(hout_a)?, &hout_a.t_matmul(hout_b)?, lambda)
}

/// Mean diagonal of `HᵀH`, the scale for relative ridge strengths.
pub fn gram_scale(h: &Matrix) -> f64 {
    if h.cols() == 0 {
        return 0.0;
    }
    h.as_slice().iter().map(|x| x * x).sum::<f64>() / h.cols() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal_rows;
    use crate::transport::{bilinear_residual, fit_maps};

    #[test]
    fn zero_pad_examples() {
        let t = gaussian_matrix(2, 3, 1);
        assert_eq!(zero_pad_update(&t, 2, 3).unwrap(), t);
        let one = Matrix::from_diag(&[5.0]);
        assert_eq!(
            zero_pad_update(&one, 2, 2).unwrap(),
            Matrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 0.0]]).unwrap()
        );
        let p = zero_pad_update(&t, 7, 4).unwrap();
        assert_eq!(p.frobenius_norm(), t.frobenius_norm());
        assert!(zero_pad_update(&t, 1, 3).is_err());
        assert_eq!(zero_pad_bias(&[1.0, 2.0], 3).unwrap(), vec![1.0, 2.0, 0.0]);
        assert!(zero_pad_bias(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn random_update_examples() {
        assert_eq!(random_update(3, 4, 0.0, 1).unwrap(), Matrix::zeros(3, 4));
        for seed in 0..20 {
            let r = random_update(5, 3, 2.5, seed).unwrap();
            assert!((r.frobenius_norm() - 2.5).abs() <= 1e-12);
        }
        assert_eq!(
            random_update(4, 4, 1.0, 9).unwrap(),
            random_update(4, 4, 1.0, 9).unwrap()
        );
        assert!(random_update(2, 2, -1.0, 0).is_err());
        assert!((norm2(&random_vector(6, 3.0, 2).unwrap()) - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn random_source_examples() {
        let map = fit_maps(
            &gaussian_matrix(20, 3, 1),
            &gaussian_matrix(20, 5, 2),
            &gaussian_matrix(20, 2, 3),
            &gaussian_matrix(20, 4, 4),
        )
        .unwrap();
        assert_eq!(
            random_source_transport(&map, (2, 3), 0.0, 5).unwrap(),
            Matrix::zeros(4, 5)
        );
        let r = random_source_transport(&map, (2, 3), 1.7, 5).unwrap();
        assert!((r.frobenius_norm() - 1.7).abs() <= 1e-10);
        assert_eq!(r, random_source_transport(&map, (2, 3), 1.7, 5).unwrap());
        assert!(random_source_transport(&map, (3, 3), 1.0, 5).is_err());
    }

    struct Inst {
        hin_a: Matrix,
        hout_a: Matrix,
        hin_b: Matrix,
        hout_b: Matrix,
        tau: Matrix,
        t_in: Matrix,
        t_out: Matrix,
    }

    fn isometric(m: usize, da_in: usize, da_out: usize, db_in: usize, db_out: usize, seed: u64) -> Inst {
        let hin_a = gaussian_matrix(m, da_in, seed);
        let hout_a = gaussian_matrix(m, da_out, seed + 1);
        let t_in = random_orthonormal_rows(da_in, db_in, seed + 2).unwrap();
        let t_out = random_orthonormal_rows(da_out, db_out, seed + 3).unwrap();
        Inst {
            hin_b: hin_a.matmul(&t_in).unwrap(),
            hout_b: hout_a.matmul(&t_out).unwrap(),
            hin_a,
            hout_a,
            tau: gaussian_matrix(da_out, da_in, seed + 4),
            t_in,
            t_out,
        }
    }

    #[test]
    fn pinv_recovers_identity_case() {
        let hin = gaussian_matrix(30, 3, 1);
        let hout = gaussian_matrix(30, 4, 2);
        let tau = gaussian_matrix(4, 3, 3);
        let got = pinv_transport(&hin, &hout, &hin, &hout, &tau, 1e-10).unwrap();
        assert!(got.max_abs_diff(&tau) <= 1e-7);
    }

    #[test]
    fn pinv_matches_closed_form_on_isometry() {
        let i = isometric(40, 3, 4, 5, 6, 10);
        let closed = i.t_out.t_matmul(&i.tau).unwrap().matmul(&i.t_in).unwrap();
        let got = pinv_transport(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau, 1e-10).unwrap();
        assert!(got.max_abs_diff(&closed) <= 1e-6, "{}", got.max_abs_diff(&closed));
    }

    #[test]
    fn pinv_residual_exceeds_closed_form_when_rank_deficient() {
        // graded source scales; the target gets one dead input feature
        let mut i = isometric(40, 3, 3, 4, 4, 20);
        for r in 0..40 {
            i.hin_a[(r, 1)] *= 1e-3;
            i.hin_a[(r, 2)] *= 1e-6;
        }
        let mut t_in = Matrix::zeros(3, 4);
        t_in[(0, 0)] = 1.0;
        t_in[(1, 1)] = 1.0;
        t_in[(2, 2)] = 1.0;
        let hin_b = i.hin_a.matmul(&t_in).unwrap();
        let map = fit_maps(&i.hin_a, &hin_b, &i.hout_a, &i.hout_b).unwrap();
        let theseus = transport_update(&i.tau, &map).unwrap();
        let pinv = pinv_transport(&i.hin_a, &i.hout_a, &hin_b, &i.hout_b, &i.tau, 1e-10).unwrap();
        assert!(pinv.is_finite());
        let r_t = bilinear_residual(&i.hin_a, &i.hout_a, &hin_b, &i.hout_b, &i.tau, &theseus).unwrap();
        let r_p = bilinear_residual(&i.hin_a, &i.hout_a, &hin_b, &i.hout_b, &i.tau, &pinv).unwrap();
        assert!(r_t < r_p, "theseus {r_t:e} pinv {r_p:e}");
    }

    #[test]
    fn tikhonov_limits() {
        let i = isometric(40, 3, 3, 3, 3, 30);
        let p = pinv_transport(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau, 1e-12).unwrap();
        let t = tikhonov_transport(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau, 1e-10).unwrap();
        assert!(t.max_abs_diff(&p) <= 1e-4);

        let rhs = normal_rhs(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau).unwrap();
        for lambda in [1e6, 1e8] {
            let big = tikhonov_transport(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau, lambda).unwrap();
            assert!(big.frobenius_norm() <= rhs.frobenius_norm() / (lambda * lambda) * (1.0 + 1e-12));
        }
        assert!(tikhonov_transport(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau, 0.0).is_err());
    }

    #[test]
    fn tikhonov_shrinks_ill_conditioned() {
        let mut i = isometric(12, 3, 3, 4, 4, 40);
        let noise = gaussian_matrix(12, 4, 41);
        // nearly collinear target inputs
        for r in 0..12 {
            let v = i.hin_b[(r, 0)];
            i.hin_b[(r, 1)] = v + 1e-7 * noise[(r, 1)];
        }
        let p = pinv_transport(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau, 1e-15).unwrap();
        let t = tikhonov_transport(&i.hin_a, &i.hout_a, &i.hin_b, &i.hout_b, &i.tau, 1e-3).unwrap();
        assert!(t.frobenius_norm() < p.frobenius_norm());
    }

    #[test]
    fn output_map_carries_isometric_bias() {
        let i = isometric(30, 2, 3, 2, 5, 50);
        let r = pinv_output_map(&i.hout_a, &i.hout_b, 1e-10).unwrap();
        assert!(r.max_abs_diff(&i.t_out) <= 1e-8);
        let rt = tikhonov_output_map(&i.hout_a, &i.hout_b, 1e-12).unwrap();
        assert!(rt.max_abs_diff(&i.t_out) <= 1e-8);
    }
}
