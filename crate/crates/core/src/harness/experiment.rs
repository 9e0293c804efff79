use serde::{Deserialize, Serialize};

use super::alpha::{alpha_search, default_alpha_grid};
use super::data::{sample_split, Renderer, Samples, Split, SyntheticTask, TokenLayout};
use super::isometric::build_isometric_target;
use super::train::{accuracy, train_classifier, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::{random_orthonormal_rows, DEFAULT_RCOND};
use crate::model::{apply_update, Checkpoint, TaskVector};
use crate::rng::{derive, seeded};
use crate::seqalign::AlignStrategy;
use crate::tensor::Tensor3;
use crate::transport::{
    depth_expand, transport_task_vector, Method, TransportConfig, TransportReport, DEFAULT_TIKHONOV_LAMBDA,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub n_classes: usize,
    pub d_patch: usize,
    pub grid: usize,
    pub class_token: bool,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub n_train_per_class: usize,
    pub n_val_per_class: usize,
    pub n_test_per_class: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n_classes: 4,
            d_patch: 8,
            grid: 2,
            class_token: true,
            center_scale: 1.0,
            noise_sigma: 1.0,
            n_train_per_class: 200,
            n_val_per_class: 50,
            n_test_per_class: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Side of the patch grid the model sees.
    pub grid: usize,
    #[serde(default = "yes")]
    pub relu: bool,
    #[serde(default = "yes")]
    pub bias: bool,
}

fn default_depth() -> usize {
    2
}

fn yes() -> bool {
    true
}

fn default_source() -> ModelConfig {
    ModelConfig {
        width: 16,
        depth: 2,
        grid: 2,
        relu: true,
        bias: true,
    }
}

fn default_target() -> ModelConfig {
    ModelConfig {
        width: 24,
        depth: 2,
        grid: 3,
        relu: true,
        bias: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Target rebuilt from the pretrained source through known isometries.
    Isometric,
    /// Target initialized and pretrained on its own.
    #[default]
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub calib: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: 0,
            init: 1,
            calib: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub pretrain_steps: usize,
    pub pretrain_per_class: usize,
    pub finetune_steps: usize,
    pub lr: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            pretrain_steps: 500,
            pretrain_per_class: 200,
            finetune_steps: 500,
            lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub source_model: ModelConfig,
    pub target_model: ModelConfig,
    pub regime: Regime,
    #[serde(rename = "batches_B", alias = "batches_b")]
    pub batches_b: usize,
    pub batch_size: usize,
    pub methods: Vec<Method>,
    pub seq_align: AlignStrategy,
    pub alpha_grid: Vec<f64>,
    pub seeds: Seeds,
    pub training: TrainingConfig,
    pub lambda: f64,
    pub rcond: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskConfig::default(),
            source_model: default_source(),
            target_model: default_target(),
            regime: Regime::default(),
            batches_b: 10,
            batch_size: 32,
            methods: vec![Method::Theseus, Method::ZeroPad, Method::Random],
            seq_align: AlignStrategy::default(),
            alpha_grid: default_alpha_grid(),
            seeds: Seeds::default(),
            training: TrainingConfig::default(),
            lambda: DEFAULT_TIKHONOV_LAMBDA,
            rcond: DEFAULT_RCOND,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The linear stacks of the isometric regime. Patches are as wide as the
    /// source so its activations are full rank and the planted maps are the
    /// unique Procrustes solutions.
    pub fn isometric() -> Self {
        let mut c = ExperimentConfig {
            regime: Regime::Isometric,
            ..Default::default()
        };
        c.source_model.relu = false;
        c.target_model.relu = false;
        c.task.d_patch = c.source_model.width;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        if self.methods.is_empty() {
            return bad("methods", "at least one method is required".into());
        }
        if self.batches_b == 0 || self.batch_size == 0 {
            return bad("batches_B", "batches_B and batch_size must be >= 1".into());
        }
        let n_train = self.task.n_classes * self.task.n_train_per_class;
        if self.batches_b * self.batch_size > n_train {
            return bad(
                "batches_B",
                format!(
                    "{} calibration samples requested but the train split holds {n_train}",
                    self.batches_b * self.batch_size
                ),
            );
        }
        for (key, m) in [
            ("source_model", &self.source_model),
            ("target_model", &self.target_model),
        ] {
            if m.width < self.task.n_classes || m.width < self.task.d_patch {
                return bad(key, format!("width {} must cover d_patch and n_classes", m.width));
            }
            if m.depth == 0 || m.grid == 0 {
                return bad(key, "depth and grid must be >= 1".into());
            }
        }
        if self.target_model.depth < self.source_model.depth {
            return bad("target_model", "depth must be >= the source depth".into());
        }
        if self.regime == Regime::Isometric {
            if self.source_model.relu {
                return bad("source_model", "the isometric regime needs relu = false".into());
            }
            if self.target_model.depth != self.source_model.depth {
                return bad("target_model", "the isometric regime needs equal depths".into());
            }
            if self.target_model.width < self.source_model.width {
                return bad(
                    "target_model",
                    "the isometric regime needs target width >= source width".into(),
                );
            }
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("alpha_grid", "must be non-empty and strictly ascending".into());
        }
        if !(self.training.lr > 0.0) {
            return bad("training", "lr must be > 0".into());
        }
        Ok(())
    }

    fn transport_config(&self, method: Method) -> TransportConfig {
        TransportConfig {
            strategy: self.seq_align,
            method,
            lambda: self.lambda,
            rcond: self.rcond,
            seed: derive(self.seeds.calib, 1),
        }
    }
}

/// Rendered inputs with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub inputs: Tensor3,
    pub labels: Vec<usize>,
}

/// The same raw calibration samples rendered for both models.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub sample_ids: Vec<usize>,
    pub inputs_a: Tensor3,
    pub inputs_b: Tensor3,
}

impl CalibrationSet {
    pub fn new(samples: &Samples, sample_ids: Vec<usize>, ra: &Renderer, rb: &Renderer) -> Result<Self> {
        let picked = samples.select(&sample_ids);
        Ok(CalibrationSet {
            inputs_a: ra.render(&picked.raw)?,
            inputs_b: rb.render(&picked.raw)?,
            sample_ids,
        })
    }
}

/// Everything a run builds before any transport happens.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub n_classes: usize,
    pub renderer_a: Renderer,
    pub renderer_b: Renderer,
    /// Source base and fine-tuned models, depth-expanded when needed.
    pub theta_a: Checkpoint,
    pub theta_a_ft: Checkpoint,
    pub theta_b: Checkpoint,
    pub calib: CalibrationSet,
    pub train_b: Labeled,
    pub val_b: Labeled,
    pub test_b: Labeled,
    /// Source test accuracy before and after fine-tuning.
    pub source_accuracy: (f64, f64),
}

fn render(r: &Renderer, s: &Samples) -> Result<Labeled> {
    Ok(Labeled {
        inputs: r.render(&s.raw)?,
        labels: s.labels.clone(),
    })
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let t = &cfg.task;
    let raw_layout = TokenLayout {
        grid: t.grid,
        class_token: t.class_token,
    };
    let d_raw = t.grid * t.grid * t.d_patch;
    let (downstream, pretrain) = stage(
        "data",
        (|| {
            Ok((
                SyntheticTask::generate(
                    t.n_classes,
                    d_raw,
                    t.center_scale,
                    t.noise_sigma,
                    derive(cfg.seeds.data, 1),
                )?,
                SyntheticTask::generate(
                    t.n_classes,
                    d_raw,
                    t.center_scale,
                    t.noise_sigma,
                    derive(cfg.seeds.data, 2),
                )?,
            ))
        })(),
    )?;
    let (pre, train, val, test) = stage(
        "data",
        (|| {
            Ok((
                sample_split(&pretrain, cfg.training.pretrain_per_class, Split::Train)?,
                sample_split(&downstream, t.n_train_per_class, Split::Train)?,
                sample_split(&downstream, t.n_val_per_class, Split::Val)?,
                sample_split(&downstream, t.n_test_per_class, Split::Test)?,
            ))
        })(),
    )?;

    let (sa, sb) = (&cfg.source_model, &cfg.target_model);
    let train_cfg = |steps| TrainConfig {
        steps,
        lr: cfg.training.lr,
        n_classes: t.n_classes,
    };
    let proj_a = stage(
        "models",
        random_orthonormal_rows(t.d_patch, sa.width, derive(cfg.seeds.init, 10)),
    )?;
    let renderer_a = stage("models", Renderer::new(raw_layout, sa.grid, proj_a))?;
    let a0 = stage(
        "models",
        Checkpoint::init(
            Checkpoint::uniform_specs(sa.width, sa.depth, sa.relu, sa.bias),
            derive(cfg.seeds.init, 1),
        ),
    )?;
    let pre_a = stage("pretrain_source", render(&renderer_a, &pre))?;
    let theta_a = stage(
        "pretrain_source",
        train_classifier(
            &a0,
            &pre_a.inputs,
            &pre_a.labels,
            &train_cfg(cfg.training.pretrain_steps),
        ),
    )?;

    let (theta_b, renderer_b) = match cfg.regime {
        Regime::Independent => {
            let proj_b = stage(
                "models",
                random_orthonormal_rows(t.d_patch, sb.width, derive(cfg.seeds.init, 11)),
            )?;
            let rb = stage("models", Renderer::new(raw_layout, sb.grid, proj_b))?;
            let b0 = stage(
                "models",
                Checkpoint::init(
                    Checkpoint::uniform_specs(sb.width, sb.depth, sb.relu, sb.bias),
                    derive(cfg.seeds.init, 2),
                ),
            )?;
            let pre_b = stage("pretrain_target", render(&rb, &pre))?;
            let b = stage(
                "pretrain_target",
                train_classifier(
                    &b0,
                    &pre_b.inputs,
                    &pre_b.labels,
                    &train_cfg(cfg.training.pretrain_steps),
                ),
            )?;
            (b, rb)
        }
        Regime::Isometric => {
            let widths = vec![sb.width; sa.depth + 1];
            let (b, maps) = stage(
                "isometric_target",
                build_isometric_target(&theta_a, &widths, t.n_classes, derive(cfg.seeds.init, 3)),
            )?;
            let proj_b = stage("isometric_target", renderer_a.proj.matmul(&maps[0].t_in))?;
            (b, stage("models", Renderer::new(raw_layout, sb.grid, proj_b))?)
        }
    };

    let train_a = stage("finetune", render(&renderer_a, &train))?;
    let theta_a_ft = stage(
        "finetune",
        train_classifier(
            &theta_a,
            &train_a.inputs,
            &train_a.labels,
            &train_cfg(cfg.training.finetune_steps),
        ),
    )?;

    let n_calib = cfg.batches_b * cfg.batch_size;
    let mut ids: Vec<usize> = (0..train.len()).collect();
    {
        use rand::seq::SliceRandom;
        ids.shuffle(&mut seeded(derive(cfg.seeds.calib, 0)));
    }
    ids.truncate(n_calib);
    let calib = stage(
        "calibration",
        CalibrationSet::new(&train, ids, &renderer_a, &renderer_b),
    )?;

    let test_a = stage("evaluate", render(&renderer_a, &test))?;
    let source_accuracy = stage(
        "evaluate",
        (|| {
            Ok((
                accuracy(&theta_a, &test_a.inputs, &test_a.labels, t.n_classes)?,
                accuracy(&theta_a_ft, &test_a.inputs, &test_a.labels, t.n_classes)?,
            ))
        })(),
    )?;
    let (theta_a, theta_a_ft) = if sb.depth > sa.depth {
        stage(
            "depth_expand",
            (|| Ok((depth_expand(&theta_a, sb.depth)?, depth_expand(&theta_a_ft, sb.depth)?)))(),
        )?
    } else {
        (theta_a, theta_a_ft)
    };
    Ok(Prepared {
        n_classes: t.n_classes,
        train_b: stage("evaluate", render(&renderer_b, &train))?,
        val_b: stage("evaluate", render(&renderer_b, &val))?,
        test_b: stage("evaluate", render(&renderer_b, &test))?,
        source_accuracy,
        renderer_a,
        renderer_b,
        theta_a,
        theta_a_ft,
        theta_b,
        calib,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub in_residual_mean: f64,
    pub out_residual_mean: f64,
    pub bilinear_residual_mean: f64,
    /// Largest `|‖τ_B‖ − ‖τ_A‖|` over layers.
    pub max_norm_gap: f64,
}

impl ResidualSummary {
    pub fn of(report: &TransportReport) -> Self {
        let n = report.layers.len().max(1) as f64;
        let mean = |f: fn(&crate::transport::LayerReport) -> f64| report.layers.iter().map(f).sum::<f64>() / n;
        ResidualSummary {
            in_residual_mean: mean(|r| r.in_residual),
            out_residual_mean: mean(|r| r.out_residual),
            bilinear_residual_mean: mean(|r| r.bilinear_residual),
            max_norm_gap: report
                .layers
                .iter()
                .map(|r| (r.tau_norm_dst - r.tau_norm_src).abs())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub best_alpha: f64,
    pub val_accuracy: f64,
    pub delta_acc: f64,
    pub residuals: ResidualSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub source_accuracy_base: f64,
    pub source_accuracy_finetuned: f64,
    pub methods: Vec<MethodResult>,
}

impl ExperimentResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Transports with `method`, searches `α` on validation and scores on test.
pub fn evaluate_method(p: &Prepared, cfg: &ExperimentConfig, method: Method) -> Result<(MethodResult, TaskVector)> {
    let (tau_b, report) = stage(
        "transport",
        transport_task_vector(
            &p.theta_a,
            &p.theta_a_ft,
            &p.theta_b,
            &p.calib.inputs_a,
            &p.calib.inputs_b,
            &cfg.transport_config(method),
        ),
    )?;
    let (best_alpha, val_accuracy) = stage(
        "alpha_search",
        alpha_search(
            &p.theta_b,
            &tau_b,
            &p.val_b.inputs,
            &p.val_b.labels,
            p.n_classes,
            &cfg.alpha_grid,
        ),
    )?;
    let (before, after) = stage(
        "evaluate",
        (|| {
            let before = accuracy(&p.theta_b, &p.test_b.inputs, &p.test_b.labels, p.n_classes)?;
            let tuned = apply_update(&p.theta_b, &tau_b, best_alpha)?;
            Ok((
                before,
                accuracy(&tuned, &p.test_b.inputs, &p.test_b.labels, p.n_classes)?,
            ))
        })(),
    )?;
    log::info!("{method}: alpha {best_alpha} acc {before:.4} -> {after:.4}");
    Ok((
        MethodResult {
            method,
            accuracy_before: before,
            accuracy_after: after,
            best_alpha,
            val_accuracy,
            delta_acc: after - before,
            residuals: ResidualSummary::of(&report),
        },
        tau_b,
    ))
}

pub fn run_prepared(p: &Prepared, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let methods = cfg
        .methods
        .iter()
        .map(|&m| evaluate_method(p, cfg, m).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        source_accuracy_base: p.source_accuracy.0,
        source_accuracy_finetuned: p.source_accuracy.1,
        methods,
    })
}

/// End-to-end run: data, source training and fine-tuning, target
/// construction, calibration, every method with its `α` search, and test
/// evaluation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let started = std::time::Instant::now();
    let p = prepare(cfg)?;
    let out = run_prepared(&p, cfg)?;
    log::info!("experiment finished in {:.2?}", started.elapsed());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: AlignStrategy,
    pub method: Method,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub best_alpha: f64,
    pub delta_acc: f64,
}

/// Reruns the configured methods under each sequence-alignment strategy on
/// one set of prepared models.
pub fn ablate_seqalign(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let p = prepare(cfg)?;
    let mut rows = Vec::new();
    for strategy in AlignStrategy::ALL {
        let c = ExperimentConfig {
            seq_align: strategy,
            ..cfg.clone()
        };
        for &m in &cfg.methods {
            let (r, _) = evaluate_method(&p, &c, m)?;
            rows.push(AblationRow {
                strategy,
                method: m,
                accuracy_before: r.accuracy_before,
                accuracy_after: r.accuracy_after,
                best_alpha: r.best_alpha,
                delta_acc: r.delta_acc,
            });
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "strategy",
        "method",
        "accuracy_before",
        "accuracy_after",
        "best_alpha",
        "delta_acc",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            r.method.to_string(),
            r.accuracy_before.to_string(),
            r.accuracy_after.to_string(),
            r.best_alpha.to_string(),
            r.delta_acc.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}
