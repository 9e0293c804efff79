//! Desk-scale experiment machinery: synthetic data, a small trainer, the
//! `α` search, exact-isometry targets, end-to-end runs and warm starts.

mod alpha;
mod data;
mod experiment;
mod fixtures;
mod isometric;
mod train;
mod warmstart;

pub use alpha::{alpha_search, default_alpha_grid};
pub use data::{make_dataset, sample_split, Renderer, Samples, Split, SyntheticTask, TokenLayout};
pub use experiment::{
    ablate_seqalign, ablation_csv, evaluate_method, prepare, run_experiment, run_prepared, AblationRow, CalibrationSet,
    ExperimentConfig, ExperimentResult, Labeled, MethodResult, ModelConfig, Prepared, Regime, ResidualSummary, Seeds,
    TaskConfig, TrainingConfig,
};
pub use fixtures::{demo_config, write_fixtures};
pub use isometric::{build_isometric_target, isometric_target_with_maps};
pub use train::{
    accuracy, logits, loss, loss_and_gradients, predict, train_classifier, train_traced, Gradients, TrainConfig,
};
pub use warmstart::{warm_start_compare, CurvePoint, Curves};
