use super::checkpoint::Checkpoint;
use crate::error::{dim_err, Result};
use crate::linalg::Matrix;
use crate::tensor::Tensor3;

/// Inputs and pre-activation outputs of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub layer_index: usize,
    pub h_in: Tensor3,
    /// `h_in · Wᵀ + b`, captured before the nonlinearity.
    pub h_out: Tensor3,
}

/// `h · Wᵀ + b` on flattened tokens.
pub(crate) fn affine(h: &Matrix, w: &Matrix, b: Option<&[f64]>) -> Result<Matrix> {
    let mut z = h.matmul_t(w)?;
    if let Some(b) = b {
        for r in 0..z.rows() {
            for (x, y) in z.row_mut(r).iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    Ok(z)
}

fn check_input(ckpt: &Checkpoint, inputs: &Tensor3) -> Result<()> {
    if let Some(d_in) = ckpt.d_in() {
        if inputs.dim() != d_in {
            return dim_err(format!("layer 0 expects {d_in} input features, got {}", inputs.dim()))
                .map_err(|e: crate::Error| e.at_layer(0));
        }
    }
    Ok(())
}

/// Runs the stack token by token and records every layer's activations.
pub fn forward_collect(ckpt: &Checkpoint, inputs: &Tensor3) -> Result<(Tensor3, Vec<ActivationRecord>)> {
    check_input(ckpt, inputs)?;
    let (n, l, _) = inputs.shape();
    let mut h = inputs.to_matrix();
    let mut records = Vec::with_capacity(ckpt.depth());
    for (idx, spec) in ckpt.specs().iter().enumerate() {
        let z = affine(&h, ckpt.weight(idx), ckpt.bias(idx)).map_err(|e| e.at_layer(idx))?;
        let next = z.map(|x| spec.activation.apply(x));
        records.push(ActivationRecord {
            layer_index: idx,
            h_in: Tensor3::from_matrix(h, n, l)?,
            h_out: Tensor3::from_matrix(z, n, l)?,
        });
        h = next;
    }
    Ok((Tensor3::from_matrix(h, n, l)?, records))
}

/// Network output without recording.
pub fn forward(ckpt: &Checkpoint, inputs: &Tensor3) -> Result<Tensor3> {
    check_input(ckpt, inputs)?;
    let (n, l, _) = inputs.shape();
    let mut h = inputs.to_matrix();
    for (idx, spec) in ckpt.specs().iter().enumerate() {
        h = affine(&h, ckpt.weight(idx), ckpt.bias(idx))
            .map_err(|e| e.at_layer(idx))?
            .map(|x| spec.activation.apply(x));
    }
    Tensor3::from_matrix(h, n, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::model::{Activation, LayerSpec};

    #[test]
    fn identity_network() {
        let c = Checkpoint::new(
            vec![LayerSpec::new(3, 3, false, Activation::Identity)],
            vec![Matrix::identity(3)],
            vec![None],
            Default::default(),
        )
        .unwrap();
        let x = Tensor3::from_matrix(gaussian_matrix(6, 3, 1), 2, 3).unwrap();
        let (out, rec) = forward_collect(&c, &x).unwrap();
        assert_eq!(out, x);
        assert_eq!(rec[0].h_in, x);
        assert_eq!(rec[0].h_out, x);
    }

    #[test]
    fn scalar_scaling() {
        let c = Checkpoint::new(
            vec![LayerSpec::new(1, 1, false, Activation::Identity)],
            vec![Matrix::from_diag(&[2.0])],
            vec![None],
            Default::default(),
        )
        .unwrap();
        let x = Tensor3::from_vec(1, 1, 1, vec![3.0]).unwrap();
        let (_, rec) = forward_collect(&c, &x).unwrap();
        assert_eq!(rec[0].h_out.as_slice(), &[6.0]);
    }

    #[test]
    fn records_match_standalone_multiply() {
        let c = Checkpoint::init(
            vec![
                LayerSpec::new(4, 5, true, Activation::Relu),
                LayerSpec::new(5, 3, true, Activation::Identity),
            ],
            9,
        )
        .unwrap();
        // give the biases nonzero values
        let biases = vec![Some(vec![0.1, -0.2, 0.3, 0.0, 0.5]), Some(vec![1.0, -1.0, 0.25])];
        let c = c.with_params(c.weights().to_vec(), biases).unwrap();
        let x = Tensor3::from_matrix(gaussian_matrix(12, 4, 2), 4, 3).unwrap();
        let (out, rec) = forward_collect(&c, &x).unwrap();
        for r in &rec {
            let w = c.weight(r.layer_index);
            let b = c.bias(r.layer_index).unwrap();
            let hin = r.h_in.to_matrix();
            let hout = r.h_out.to_matrix();
            for i in 0..hin.rows() {
                for o in 0..w.rows() {
                    let mut s = 0.0;
                    for k in 0..w.cols() {
                        s += hin[(i, k)] * w[(o, k)];
                    }
                    assert_eq!(hout[(i, o)], s + b[o]);
                }
            }
        }
        let relu_in = rec[0].h_out.to_matrix().map(|v| v.max(0.0));
        assert_eq!(rec[1].h_in.to_matrix(), relu_in);
        assert_eq!(out, forward(&c, &x).unwrap());
    }

    #[test]
    fn input_mismatch_names_layer() {
        let c = Checkpoint::init(vec![LayerSpec::new(4, 2, false, Activation::Identity)], 0).unwrap();
        let err = forward_collect(&c, &Tensor3::zeros(1, 1, 3)).unwrap_err();
        assert!(err.to_string().contains("layer 0"));
    }
}
