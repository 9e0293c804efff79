use super::train::accuracy;
use crate::error::{Error, Result};
use crate::model::{apply_update, Checkpoint, TaskVector};
use crate::tensor::Tensor3;

/// `{0, step, 2·step, …, 1}` with `round(1/step)` intervals.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Validation linear search over `θ_B + α τ_B`. Returns `(α*, accuracy)`;
/// ties go to the smallest `α`.
pub fn alpha_search(
    theta_b: &Checkpoint,
    tau_b: &TaskVector,
    val_inputs: &Tensor3,
    val_labels: &[usize],
    n_classes: usize,
    grid: &[f64],
) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha grid must be strictly ascending and finite: {grid:?}"
        )));
    }
    let mut best: Option<(f64, f64)> = None;
    for &a in grid {
        let acc = accuracy(&apply_update(theta_b, tau_b, a)?, val_inputs, val_labels, n_classes)?;
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((a, acc));
        }
    }
    Ok(best.expect("grid is non-empty"))
}
