use crate::error::{dim_err, Error, Result};
use crate::linalg::{random_orthonormal_rows, Matrix};
use crate::model::{Activation, Checkpoint};
use crate::rng::derive;
use crate::transport::ProcrustesMap;

fn require_linear(theta_a: &Checkpoint) -> Result<()> {
    if let Some(l) = theta_a
        .specs()
        .iter()
        .position(|s| s.activation != Activation::Identity)
    {
        return Err(Error::InvalidArgument(format!(
            "isometric targets need a linear stack; layer {l} uses {:?}",
            theta_a.specs()[l].activation
        )));
    }
    Ok(())
}

/// `W_B = T_outᵀ W_A T_in` and `b_B = b_A T_out` for every layer, so that
/// `B` fed with `x T_in⁽⁰⁾` produces layer activations `H_A T` exactly.
pub fn isometric_target_with_maps(theta_a: &Checkpoint, maps: &[ProcrustesMap]) -> Result<Checkpoint> {
    require_linear(theta_a)?;
    if maps.len() != theta_a.depth() {
        return Err(Error::CountMismatch(format!(
            "{} maps for {} layers",
            maps.len(),
            theta_a.depth()
        )));
    }
    let mut specs = Vec::with_capacity(maps.len());
    let mut weights = Vec::with_capacity(maps.len());
    let mut biases = Vec::with_capacity(maps.len());
    for (l, m) in maps.iter().enumerate() {
        let spec = theta_a.specs()[l];
        if m.source_shape() != (spec.d_out, spec.d_in) {
            return dim_err(format!(
                "layer {l}: maps expect source {:?}, layer is {}x{}",
                m.source_shape(),
                spec.d_out,
                spec.d_in
            ));
        }
        if l > 0 && maps[l - 1].t_out.shape() != m.t_in.shape() {
            return dim_err(format!(
                "layer {l}: input map does not chain with the previous output map"
            ));
        }
        let (d_out, d_in) = m.target_shape();
        weights.push(m.t_out.t_matmul(theta_a.weight(l))?.matmul(&m.t_in)?);
        biases.push(match theta_a.bias(l) {
            Some(b) => Some(m.t_out.vec_mul(b)?),
            None => None,
        });
        let mut s = spec;
        s.d_in = d_in;
        s.d_out = d_out;
        specs.push(s);
    }
    let mut meta = theta_a.meta.clone();
    meta.insert("isometric_target".into(), "true".into());
    Checkpoint::new(specs, weights, biases, meta)
}

/// Samples orthonormal-row interface maps for target interface widths
/// `widths_b` (`d_0, …, d_L`) and builds the isometric target. The last map
/// keeps the first `readout_dims` coordinates fixed so class logits carry
/// over unchanged.
pub fn build_isometric_target(
    theta_a: &Checkpoint,
    widths_b: &[usize],
    readout_dims: usize,
    seed: u64,
) -> Result<(Checkpoint, Vec<ProcrustesMap>)> {
    require_linear(theta_a)?;
    let depth = theta_a.depth();
    if widths_b.len() != depth + 1 {
        return Err(Error::CountMismatch(format!(
            "{} target widths for {} layers (need depth + 1)",
            widths_b.len(),
            depth
        )));
    }
    let mut widths_a: Vec<usize> = theta_a.specs().iter().map(|s| s.d_in).collect();
    widths_a.extend(theta_a.d_out());
    let mut iface = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let (da, db) = (widths_a[k], widths_b[k]);
        let q = if k == depth && readout_dims > 0 {
            readout_preserving(da, db, readout_dims, derive(seed, k as u64))?
        } else {
            random_orthonormal_rows(da, db, derive(seed, k as u64))?
        };
        iface.push(q);
    }
    let maps: Vec<ProcrustesMap> = (0..depth)
        .map(|l| ProcrustesMap {
            t_in: iface[l].clone(),
            t_out: iface[l + 1].clone(),
            in_residual: 0.0,
            out_residual: 0.0,
        })
        .collect();
    Ok((isometric_target_with_maps(theta_a, &maps)?, maps))
}

/// `diag(I_r, Q)` with `Q` a random `(d_a − r) × (d_b − r)` orthonormal-row map.
fn readout_preserving(d_a: usize, d_b: usize, r: usize, seed: u64) -> Result<Matrix> {
    if r > d_a || d_a > d_b {
        return dim_err(format!("cannot keep {r} readout coordinates mapping {d_a} -> {d_b}"));
    }
    let q = random_orthonormal_rows(d_a - r, d_b - r, seed)?;
    Ok(Matrix::from_fn(d_a, d_b, |i, j| match (i < r, j < r) {
        (true, true) => (i == j) as u8 as f64,
        (false, false) => q[(i - r, j - r)],
        _ => 0.0,
    }))
}
