use serde::{Deserialize, Serialize};

use super::experiment::{csv_err, finish_csv};
use super::train::{accuracy, loss, train_traced, TrainConfig};
use crate::error::Result;
use crate::model::{apply_update, Checkpoint, TaskVector};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub cold_loss: f64,
    pub warm_loss: f64,
    pub cold_acc: f64,
    pub warm_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub alpha: f64,
    pub points: Vec<CurvePoint>,
}

impl Curves {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.points {
            w.serialize(p).map_err(csv_err)?;
        }
        if self.points.is_empty() {
            w.write_record(["step", "cold_loss", "warm_loss", "cold_acc", "warm_acc"])
                .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// First step at which the warm run's accuracy reaches `target`.
    pub fn warm_reaches(&self, target: f64) -> Option<usize> {
        self.points.iter().find(|p| p.warm_acc >= target).map(|p| p.step)
    }
}

/// Trains from `θ_B` and from `θ_B + α τ_B` with identical settings and
/// records validation loss and accuracy before every step and after the
/// last one.
#[allow(clippy::too_many_arguments)]
pub fn warm_start_compare(
    theta_b: &Checkpoint,
    tau_b: &TaskVector,
    alpha: f64,
    train: (&Tensor3, &[usize]),
    val: (&Tensor3, &[usize]),
    cfg: &TrainConfig,
) -> Result<Curves> {
    let warm_init = apply_update(theta_b, tau_b, alpha)?;
    let trace = |init: &Checkpoint| -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(cfg.steps + 1);
        train_traced(init, train.0, train.1, cfg, |_, c| {
            out.push((
                loss(c, val.0, val.1, cfg.n_classes)?,
                accuracy(c, val.0, val.1, cfg.n_classes)?,
            ));
            Ok(())
        })?;
        Ok(out)
    };
    let cold = trace(theta_b)?;
    let warm = trace(&warm_init)?;
    let points = cold
        .iter()
        .zip(&warm)
        .enumerate()
        .map(|(step, (c, w))| CurvePoint {
            step,
            cold_loss: c.0,
            warm_loss: w.0,
            cold_acc: c.1,
            warm_acc: w.1,
        })
        .collect();
    Ok(Curves { alpha, points })
}
