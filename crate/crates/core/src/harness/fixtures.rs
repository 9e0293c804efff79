use std::path::{Path, PathBuf};

use super::experiment::{prepare, ExperimentConfig, Regime, Seeds, TrainingConfig};
use crate::error::Result;
use crate::model::io::{save_calibration, CalibrationPair};
use crate::model::save_checkpoint;
use crate::transport::depth_expand;

/// A configuration small enough to run in well under a second.
pub fn demo_config(seed: u64, regime: Regime) -> ExperimentConfig {
    let mut c = match regime {
        Regime::Isometric => ExperimentConfig::isometric(),
        Regime::Independent => ExperimentConfig::default(),
    };
    c.source_model.width = 8;
    c.task.d_patch = 8;
    c.target_model.width = 12;
    c.task.n_train_per_class = 40;
    c.task.n_val_per_class = 20;
    c.task.n_test_per_class = 20;
    c.training = TrainingConfig {
        pretrain_steps: 100,
        pretrain_per_class: 40,
        finetune_steps: 100,
        lr: 0.05,
    };
    c.batches_b = 2;
    c.seeds = Seeds {
        data: seed,
        init: seed.wrapping_add(1),
        calib: seed.wrapping_add(2),
    };
    c
}

/// Writes demo checkpoints, a calibration pair and two experiment configs
/// into `dir`. Output is a pure function of `seed`.
pub fn write_fixtures(seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let cfg = demo_config(seed, Regime::Independent);
    let p = prepare(&cfg)?;
    let mut written = Vec::new();
    let mut put = |name: &str| {
        let path = dir.join(name);
        written.push(path.clone());
        path
    };
    save_checkpoint(&p.theta_a, put("theta_a.tpk"))?;
    save_checkpoint(&p.theta_a_ft, put("theta_a_ft.tpk"))?;
    save_checkpoint(&p.theta_b, put("theta_b.tpk"))?;
    save_checkpoint(
        &depth_expand(&p.theta_b, p.theta_b.depth() + 1)?,
        put("theta_b_deep.tpk"),
    )?;
    let pair = CalibrationPair::new(p.calib.inputs_a.clone(), p.calib.inputs_b.clone())?;
    save_calibration(&pair, put("calib.tpc"))?;
    std::fs::write(put("experiment.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    let iso = demo_config(seed, Regime::Isometric);
    std::fs::write(put("isometric.json"), serde_json::to_string_pretty(&iso)? + "\n")?;
    Ok(written)
}
