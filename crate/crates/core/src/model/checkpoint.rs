use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{gaussian_matrix, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub d_in: usize,
    pub d_out: usize,
    pub has_bias: bool,
    /// Applied after the affine map.
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(d_in: usize, d_out: usize, has_bias: bool, activation: Activation) -> Self {
        LayerSpec {
            d_in,
            d_out,
            has_bias,
            activation,
        }
    }
}

/// A stack of dense token-wise layers. `weights[l]` is `d_out × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    specs: Vec<LayerSpec>,
    weights: Vec<Matrix>,
    biases: Vec<Option<Vec<f64>>>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(
        specs: Vec<LayerSpec>,
        weights: Vec<Matrix>,
        biases: Vec<Option<Vec<f64>>>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let c = Checkpoint {
            specs,
            weights,
            biases,
            meta,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.specs.len() || self.biases.len() != self.specs.len() {
            return Err(Error::CountMismatch(format!(
                "{} specs, {} weights, {} biases",
                self.specs.len(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, spec) in self.specs.iter().enumerate() {
            if spec.d_in == 0 || spec.d_out == 0 {
                return dim_err(format!("layer {l} has a zero dimension"));
            }
            if self.weights[l].shape() != (spec.d_out, spec.d_in) {
                return dim_err(format!(
                    "layer {l} weight is {:?}, spec says {}x{}",
                    self.weights[l].shape(),
                    spec.d_out,
                    spec.d_in
                ));
            }
            self.weights[l].ensure_finite(&format!("layer {l} weight"))?;
            match (&self.biases[l], spec.has_bias) {
                (Some(b), true) if b.len() == spec.d_out => {
                    if b.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(format!("layer {l} bias")));
                    }
                }
                (None, false) => {}
                (Some(b), true) => {
                    return dim_err(format!(
                        "layer {l} bias has {} entries, expected {}",
                        b.len(),
                        spec.d_out
                    ))
                }
                _ => return dim_err(format!("layer {l} bias presence disagrees with spec")),
            }
            if l > 0 && self.specs[l - 1].d_out != spec.d_in {
                return dim_err(format!(
                    "layer {} outputs {} features but layer {l} expects {}",
                    l - 1,
                    self.specs[l - 1].d_out,
                    spec.d_in
                ));
            }
        }
        Ok(())
    }

    /// Gaussian init with `N(0, 1/d_in)` weights and zero biases.
    pub fn init(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let weights = specs
            .iter()
            .enumerate()
            .map(|(l, s)| {
                gaussian_matrix(s.d_out, s.d_in, rng::derive(seed, l as u64)).scale(1.0 / (s.d_in as f64).sqrt())
            })
            .collect();
        let biases = specs.iter().map(|s| s.has_bias.then(|| vec![0.0; s.d_out])).collect();
        let mut meta = BTreeMap::new();
        meta.insert("init_seed".to_string(), seed.to_string());
        Checkpoint::new(specs, weights, biases, meta)
    }

    /// Uniform-width stack: `depth` layers of `width × width`, ReLU between
    /// layers (optionally) and identity on the last one.
    pub fn uniform_specs(width: usize, depth: usize, relu: bool, bias: bool) -> Vec<LayerSpec> {
        (0..depth)
            .map(|l| {
                let act = if relu && l + 1 < depth {
                    Activation::Relu
                } else {
                    Activation::Identity
                };
                LayerSpec::new(width, width, bias, act)
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Option<Vec<f64>>] {
        &self.biases
    }

    pub fn weight(&self, l: usize) -> &Matrix {
        &self.weights[l]
    }

    pub fn bias(&self, l: usize) -> Option<&[f64]> {
        self.biases[l].as_deref()
    }

    pub fn d_in(&self) -> Option<usize> {
        self.specs.first().map(|s| s.d_in)
    }

    pub fn d_out(&self) -> Option<usize> {
        self.specs.last().map(|s| s.d_out)
    }

    pub fn is_linear(&self) -> bool {
        self.specs.iter().all(|s| s.activation == Activation::Identity)
    }

    /// Replaces parameters layer by layer, re-checking invariants.
    pub fn with_params(&self, weights: Vec<Matrix>, biases: Vec<Option<Vec<f64>>>) -> Result<Self> {
        Checkpoint::new(self.specs.clone(), weights, biases, self.meta.clone())
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Matrix], &mut [Option<Vec<f64>>]) {
        (&mut self.weights, &mut self.biases)
    }

    /// Same specs and bitwise-equal parameters (meta ignored).
    pub fn same_params(&self, other: &Checkpoint) -> bool {
        self.specs == other.specs
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| bits_eq(a.as_slice(), b.as_slice()))
            && self.biases.iter().zip(&other.biases).all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => bits_eq(a, b),
                (None, None) => true,
                _ => false,
            })
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Per-layer parameter deltas `θ_ft − θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVector {
    pub deltas: Vec<Matrix>,
    pub bias_deltas: Vec<Option<Vec<f64>>>,
}

impl TaskVector {
    pub fn zeros_like(ckpt: &Checkpoint) -> Self {
        TaskVector {
            deltas: ckpt.specs.iter().map(|s| Matrix::zeros(s.d_out, s.d_in)).collect(),
            bias_deltas: ckpt
                .specs
                .iter()
                .map(|s| s.has_bias.then(|| vec![0.0; s.d_out]))
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.deltas.len()
    }

    /// Frobenius norm over weights and biases together.
    pub fn norm(&self) -> f64 {
        let w: f64 = self.deltas.iter().map(|d| d.frobenius_norm().powi(2)).sum();
        let b: f64 = self
            .bias_deltas
            .iter()
            .flatten()
            .map(|b| b.iter().map(|x| x * x).sum::<f64>())
            .sum();
        (w + b).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.deltas.iter().all(|d| d.as_slice().iter().all(|&x| x == 0.0))
            && self.bias_deltas.iter().flatten().all(|b| b.iter().all(|&x| x == 0.0))
    }

    fn check_against(&self, ckpt: &Checkpoint) -> Result<()> {
        if self.deltas.len() != ckpt.depth() || self.bias_deltas.len() != ckpt.depth() {
            return Err(Error::CountMismatch(format!(
                "task vector has {} layers, checkpoint has {}",
                self.deltas.len(),
                ckpt.depth()
            )));
        }
        for (l, spec) in ckpt.specs.iter().enumerate() {
            if self.deltas[l].shape() != (spec.d_out, spec.d_in) {
                return dim_err(format!(
                    "layer {l} delta is {:?}, checkpoint layer is {}x{}",
                    self.deltas[l].shape(),
                    spec.d_out,
                    spec.d_in
                ));
            }
            match (&self.bias_deltas[l], spec.has_bias) {
                (Some(b), true) if b.len() == spec.d_out => {}
                (None, _) => {}
                _ => return dim_err(format!("layer {l} bias delta does not fit")),
            }
        }
        Ok(())
    }
}

/// `τ = finetuned − base`, layer by layer.
pub fn task_vector(base: &Checkpoint, finetuned: &Checkpoint) -> Result<TaskVector> {
    if base.specs != finetuned.specs {
        return dim_err("base and fine-tuned checkpoints have different layer specs");
    }
    let deltas = base
        .weights
        .iter()
        .zip(&finetuned.weights)
        .map(|(b, f)| f.sub(b))
        .collect::<Result<Vec<_>>>()?;
    let bias_deltas = base
        .biases
        .iter()
        .zip(&finetuned.biases)
        .map(|(b, f)| match (b, f) {
            (Some(b), Some(f)) => Some(f.iter().zip(b).map(|(x, y)| x - y).collect()),
            _ => None,
        })
        .collect();
    Ok(TaskVector { deltas, bias_deltas })
}

/// `θ + α τ`, recording `α` in the metadata. `α = 0` returns the base
/// parameters bit for bit.
pub fn apply_update(base: &Checkpoint, tv: &TaskVector, alpha: f64) -> Result<Checkpoint> {
    tv.check_against(base)?;
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
    }
    let mut out = base.clone();
    if alpha != 0.0 {
        let (weights, biases) = out.params_mut();
        for (w, d) in weights.iter_mut().zip(&tv.deltas) {
            *w = w.add_scaled(d, alpha)?;
        }
        for (b, d) in biases.iter_mut().zip(&tv.bias_deltas) {
            if let (Some(b), Some(d)) = (b.as_mut(), d) {
                for (x, y) in b.iter_mut().zip(d) {
                    *x += alpha * y;
                }
            }
        }
        out.validate()?;
    }
    out.meta.insert("alpha".to_string(), format!("{alpha}"));
    Ok(out)
}
