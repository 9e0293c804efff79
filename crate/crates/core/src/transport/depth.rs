use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Checkpoint, LayerSpec};

/// Deepens a uniform-width stack by linear interpolation in layer space.
///
/// Output layer `j` of `target_depth` sits at source position
/// `p = j (L_src − 1) / (L_tgt − 1)` and blends the two bracketing source
/// layers; integral positions copy the source layer bit for bit. An
/// interpolated layer takes the activation of its lower neighbour, except
/// that the last layer keeps the source's last activation.
pub fn depth_expand(base: &Checkpoint, target_depth: usize) -> Result<Checkpoint> {
    let src = base.depth();
    if src == 0 {
        return Err(Error::InvalidArgument("cannot expand an empty model".into()));
    }
    if target_depth < src {
        return Err(Error::InvalidArgument(format!(
            "depth_expand cannot shrink {src} layers to {target_depth}"
        )));
    }
    let width = base.specs()[0].d_in;
    if base.specs().iter().any(|s| s.d_in != width || s.d_out != width) {
        return Err(Error::Dimension(format!(
            "depth_expand needs uniform width; layers are {:?}",
            base.specs().iter().map(|s| (s.d_out, s.d_in)).collect::<Vec<_>>()
        )));
    }
    if target_depth == src {
        return Ok(base.clone());
    }

    let mut specs = Vec::with_capacity(target_depth);
    let mut weights = Vec::with_capacity(target_depth);
    let mut biases = Vec::with_capacity(target_depth);
    for j in 0..target_depth {
        let (lo, hi, t) = if src == 1 {
            (0, 0, 0.0)
        } else {
            let num = j * (src - 1);
            let den = target_depth - 1;
            let lo = (num / den).min(src - 1);
            let t = (num % den) as f64 / den as f64;
            (lo, (lo + 1).min(src - 1), t)
        };
        let s_lo = base.specs()[lo];
        let s_hi = base.specs()[hi];
        let activation = if j + 1 == target_depth {
            base.specs()[src - 1].activation
        } else {
            s_lo.activation
        };
        let has_bias = s_lo.has_bias || s_hi.has_bias;
        specs.push(LayerSpec::new(width, width, has_bias, activation));
        if t == 0.0 {
            weights.push(base.weight(lo).clone());
            biases.push(bias_or_zero(base, lo, has_bias));
        } else {
            let w: Matrix = base.weight(lo).scale(1.0 - t).add_scaled(base.weight(hi), t)?;
            weights.push(w);
            biases.push(has_bias.then(|| {
                let bl = bias_or_zero(base, lo, true).expect("present");
                let bh = bias_or_zero(base, hi, true).expect("present");
                bl.iter().zip(&bh).map(|(a, b)| (1.0 - t) * a + t * b).collect()
            }));
        }
    }
    let mut meta = base.meta.clone();
    meta.insert("depth_expanded_from".into(), src.to_string());
    Checkpoint::new(specs, weights, biases, meta)
}

fn bias_or_zero(c: &Checkpoint, l: usize, want: bool) -> Option<Vec<f64>> {
    want.then(|| {
        c.bias(l)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; c.specs()[l].d_out])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(depth: usize, seed: u64) -> Checkpoint {
        Checkpoint::init(Checkpoint::uniform_specs(4, depth, true, true), seed).unwrap()
    }

    #[test]
    fn same_depth_is_identity() {
        let c = stack(3, 1);
        assert!(depth_expand(&c, 3).unwrap().same_params(&c));
    }

    #[test]
    fn two_to_three_averages_middle() {
        let c = stack(2, 2);
        let e = depth_expand(&c, 3).unwrap();
        assert_eq!(e.depth(), 3);
        let avg = c.weight(0).scale(0.5).add_scaled(c.weight(1), 0.5).unwrap();
        assert!(e.weight(1).max_abs_diff(&avg) <= 1e-15);
        assert_eq!(e.weight(0), c.weight(0));
        assert_eq!(e.weight(2), c.weight(1));
        assert_eq!(e.specs()[2].activation, c.specs()[1].activation);
    }

    #[test]
    fn endpoints_preserved() {
        let c = stack(3, 4);
        let e = depth_expand(&c, 7).unwrap();
        assert_eq!(e.weight(0), c.weight(0));
        assert_eq!(e.weight(6), c.weight(2));
        assert_eq!(e.weight(3), c.weight(1));
    }

    #[test]
    fn rejects_bad_requests() {
        let c = stack(3, 0);
        assert!(depth_expand(&c, 2).is_err());
        let narrow = Checkpoint::init(
            vec![
                LayerSpec::new(4, 3, false, crate::model::Activation::Relu),
                LayerSpec::new(3, 3, false, crate::model::Activation::Identity),
            ],
            0,
        )
        .unwrap();
        assert!(matches!(depth_expand(&narrow, 4), Err(Error::Dimension(_))));
    }
}
