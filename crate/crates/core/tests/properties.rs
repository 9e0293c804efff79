use approx::assert_relative_eq;
use proptest::prelude::*;
use taskport::linalg::{gaussian_matrix, pseudo_inverse, random_orthonormal_rows, svd, DEFAULT_RCOND};
use taskport::model::io::{decode_checkpoint, encode_checkpoint};
use taskport::model::{Activation, Checkpoint, LayerSpec};
use taskport::seqalign::{align_sequence, AlignStrategy};
use taskport::transport::{fit_maps, transport_update, ProcrustesMap};
use taskport::{Error, Matrix, Tensor3};

fn low_rank(m: usize, n: usize, r: usize, seed: u64) -> Matrix {
    gaussian_matrix(m, r, seed)
        .matmul(&gaussian_matrix(r, n, seed ^ 0x55))
        .unwrap()
}

fn orthonormal_cols_dev(m: &Matrix) -> f64 {
    m.t_matmul(m).unwrap().max_abs_diff(&Matrix::identity(m.cols()))
}

fn maps(d_in: (usize, usize), d_out: (usize, usize), seed: u64) -> ProcrustesMap {
    ProcrustesMap {
        t_in: random_orthonormal_rows(d_in.0, d_in.1, seed).unwrap(),
        t_out: random_orthonormal_rows(d_out.0, d_out.1, seed + 1).unwrap(),
        in_residual: 0.0,
        out_residual: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(m in 1usize..12, n in 1usize..12, seed in any::<u64>()) {
        let a = gaussian_matrix(m, n, seed);
        let s = svd(&a).unwrap();
        let scale = a.max_abs().max(1.0);
        prop_assert!(s.reconstruct().max_abs_diff(&a) <= 1e-10 * scale);
        prop_assert!(orthonormal_cols_dev(&s.u) <= 1e-10);
        prop_assert!(orthonormal_cols_dev(&s.vt.transpose()) <= 1e-10);
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.sigma.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn svd_of_rank_deficient_input(m in 2usize..12, n in 2usize..12, seed in any::<u64>()) {
        let r = 1 + (seed as usize) % m.min(n);
        let a = low_rank(m, n, r, seed);
        let s = svd(&a).unwrap();
        prop_assert!(s.reconstruct().max_abs_diff(&a) <= 1e-10 * a.max_abs().max(1.0));
        prop_assert!(orthonormal_cols_dev(&s.u) <= 1e-10);
        prop_assert!(s.rank(1e-10) <= r);
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose_conditions(m in 1usize..10, n in 1usize..10, seed in any::<u64>()) {
        let r = 1 + (seed as usize) % m.min(n);
        let a = low_rank(m, n, r, seed);
        let p = pseudo_inverse(&a, DEFAULT_RCOND).unwrap();
        let ap = a.matmul(&p).unwrap();
        let pa = p.matmul(&a).unwrap();
        let tol = 1e-8 * a.max_abs().max(p.max_abs()).max(1.0).powi(2);
        prop_assert!(ap.matmul(&a).unwrap().max_abs_diff(&a) <= tol);
        prop_assert!(pa.matmul(&p).unwrap().max_abs_diff(&p) <= tol);
        prop_assert!(ap.max_abs_diff(&ap.transpose()) <= tol);
        prop_assert!(pa.max_abs_diff(&pa.transpose()) <= tol);
    }

    #[test]
    fn transport_is_linear_in_the_update(
        din in 1usize..6, dout in 1usize..6, extra in 0usize..4,
        a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>(),
    ) {
        let m = maps((din, din + extra), (dout, dout + extra), seed);
        let x = gaussian_matrix(dout, din, seed ^ 1);
        let y = gaussian_matrix(dout, din, seed ^ 2);
        let lhs = transport_update(&x.scale(a).add(&y.scale(b)).unwrap(), &m).unwrap();
        let rhs = transport_update(&x, &m).unwrap().scale(a)
            .add(&transport_update(&y, &m).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn narrow_to_wide_transport_preserves_frobenius_norm(
        din in 1usize..8, dout in 1usize..8, ein in 0usize..5, eout in 0usize..5, seed in any::<u64>(),
    ) {
        let m = maps((din, din + ein), (dout, dout + eout), seed);
        let tau = gaussian_matrix(dout, din, seed ^ 3);
        let tb = transport_update(&tau, &m).unwrap();
        prop_assert_eq!(tb.shape(), (dout + eout, din + ein));
        assert_relative_eq!(tb.frobenius_norm(), tau.frobenius_norm(), max_relative = 1e-12);
    }

    #[test]
    fn fitted_maps_beat_any_other_isometry(
        rows in 8usize..40, da in 1usize..5, extra in 0usize..4, seed in any::<u64>(),
    ) {
        let db = da + extra;
        let ha = gaussian_matrix(rows, da, seed);
        let hb = gaussian_matrix(rows, db, seed ^ 9);
        let fit = fit_maps(&ha, &hb, &ha, &hb).unwrap();
        prop_assert!(fit.t_in.matmul_t(&fit.t_in).unwrap().max_abs_diff(&Matrix::identity(da)) <= 1e-10);
        for k in 0..4 {
            let q = random_orthonormal_rows(da, db, seed.wrapping_add(100 + k)).unwrap();
            let other = ha.matmul(&q).unwrap().sub(&hb).unwrap().frobenius_norm();
            prop_assert!(fit.in_residual <= other + 1e-9);
        }
    }

    #[test]
    fn sequence_alignment_is_linear(
        n in 1usize..3, ls in 1usize..12, lt in 1usize..12, d in 1usize..4,
        a in -2.0f64..2.0, seed in any::<u64>(),
    ) {
        let x = Tensor3::from_matrix(gaussian_matrix(n * ls, d, seed), n, ls).unwrap();
        let y = Tensor3::from_matrix(gaussian_matrix(n * ls, d, seed ^ 4), n, ls).unwrap();
        let combo = Tensor3::from_matrix(x.to_matrix().scale(a).add(&y.to_matrix()).unwrap(), n, ls).unwrap();
        for s in [AlignStrategy::Mean, AlignStrategy::Interp1d] {
            let lhs = align_sequence(&combo, lt, s).unwrap().to_matrix();
            let rhs = align_sequence(&x, lt, s).unwrap().to_matrix().scale(a)
                .add(&align_sequence(&y, lt, s).unwrap().to_matrix()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + lhs.max_abs()));
        }
    }

    #[test]
    fn checkpoints_round_trip_bitwise(
        widths in prop::collection::vec(1usize..7, 2..5), bias in any::<bool>(), seed in any::<u64>(),
    ) {
        let specs: Vec<_> = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 < widths.len() { Activation::Relu } else { Activation::Identity };
                LayerSpec::new(w[0], w[1], bias, act)
            })
            .collect();
        let c = Checkpoint::init(specs, seed).unwrap();
        let bytes = encode_checkpoint(&c).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes.clone());
        prop_assert_eq!(&back, &c);
        let cut = (seed as usize) % bytes.len();
        prop_assert!(decode_checkpoint(&bytes[..cut]).is_err());
    }
}

#[test]
fn truncated_checkpoint_is_reported_as_such() {
    let c = Checkpoint::init(vec![LayerSpec::new(3, 2, true, Activation::Identity)], 1).unwrap();
    let bytes = encode_checkpoint(&c).unwrap();
    let err = decode_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err();
    assert!(matches!(err, Error::Truncated(_)), "{err}");
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert_eq!(decode_checkpoint(&bad).unwrap_err().kind(), "bad_magic");
}
