use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{bilinear_residual, fit_maps, transport_bias, transport_update};
use crate::baselines::{
    gram_scale, pinv_output_map, pinv_transport, random_source_bias, random_source_transport, random_update,
    random_vector, tikhonov_output_map, tikhonov_transport_split, zero_pad_bias, zero_pad_update,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{norm2, Matrix, DEFAULT_RCOND};
use crate::model::{apply_update, forward_collect, task_vector, Checkpoint, TaskVector};
use crate::rng::derive;
use crate::seqalign::{align_pair, flatten_tokens, AlignStrategy};
use crate::tensor::Tensor3;

/// Ridge strength of the Tikhonov baseline, relative to each Gram's mean
/// diagonal.
pub const DEFAULT_TIKHONOV_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Method {
    #[default]
    #[serde(rename = "theseus")]
    Theseus,
    #[serde(rename = "pinv")]
    Pinv,
    #[serde(
        rename = "pinv-tikh",
        alias = "pinv_tikh",
        alias = "pinv_tikhonov",
        alias = "pinv-tikhonov"
    )]
    PinvTikhonov,
    #[serde(rename = "zero-pad", alias = "zero_pad")]
    ZeroPad,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "random-source", alias = "random_source")]
    RandomSource,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Theseus,
        Method::Pinv,
        Method::PinvTikhonov,
        Method::ZeroPad,
        Method::Random,
        Method::RandomSource,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Theseus => "theseus",
            Method::Pinv => "pinv",
            Method::PinvTikhonov => "pinv-tikh",
            Method::ZeroPad => "zero-pad",
            Method::Random => "random",
            Method::RandomSource => "random-source",
        }
    }

    /// Whether the method reads calibration activations at all.
    pub fn uses_activations(self) -> bool {
        !matches!(self, Method::ZeroPad | Method::Random)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        match norm.as_str() {
            "theseus" => Ok(Method::Theseus),
            "pinv" => Ok(Method::Pinv),
            "pinv-tikh" | "pinv-tikhonov" => Ok(Method::PinvTikhonov),
            "zero-pad" => Ok(Method::ZeroPad),
            "random" => Ok(Method::Random),
            "random-source" => Ok(Method::RandomSource),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method `{s}` (valid: {})",
                Method::ALL.map(Method::name).join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub strategy: AlignStrategy,
    pub method: Method,
    pub lambda: f64,
    pub rcond: f64,
    pub seed: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            strategy: AlignStrategy::default(),
            method: Method::default(),
            lambda: DEFAULT_TIKHONOV_LAMBDA,
            rcond: DEFAULT_RCOND,
            seed: 0,
        }
    }
}

impl TransportConfig {
    pub fn with_method(method: Method) -> Self {
        TransportConfig {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::PinvTikhonov && !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pinv-tikh needs lambda > 0, got {}",
                self.lambda
            )));
        }
        if !(self.rcond >= 0.0 && self.rcond.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rcond must be >= 0, got {}",
                self.rcond
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub in_residual: f64,
    pub out_residual: f64,
    pub tau_norm_src: f64,
    pub tau_norm_dst: f64,
    pub bilinear_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub config: TransportConfig,
    pub layers: Vec<LayerReport>,
}

struct LayerOut {
    tau: Matrix,
    bias: Option<Vec<f64>>,
    report: LayerReport,
}

fn bias_stream(layer: usize) -> u64 {
    (1 << 32) | layer as u64
}

#[allow(clippy::too_many_arguments)]
fn transport_layer(
    l: usize,
    tau_a: &Matrix,
    bias_a: Option<&[f64]>,
    target_bias: bool,
    acts_a: (&Tensor3, &Tensor3),
    acts_b: (&Tensor3, &Tensor3),
    cfg: &TransportConfig,
) -> Result<LayerOut> {
    let (in_a, in_b) = align_pair(acts_a.0, acts_b.0, cfg.strategy)?;
    let (out_a, out_b) = align_pair(acts_a.1, acts_b.1, cfg.strategy)?;
    let (hin_a, hin_b) = (flatten_tokens(&in_a), flatten_tokens(&in_b));
    let (hout_a, hout_b) = (flatten_tokens(&out_a), flatten_tokens(&out_b));

    // the Procrustes maps are fitted for every method so reports stay comparable
    let map = fit_maps(&hin_a, &hin_b, &hout_a, &hout_b)?;
    let (d_out_b, d_in_b) = map.target_shape();
    let norm = tau_a.frobenius_norm();
    let bias_norm = bias_a.map_or(0.0, norm2);
    let seed = derive(cfg.seed, l as u64);
    let bseed = derive(cfg.seed, bias_stream(l));
    let zero_bias = vec![0.0; tau_a.rows()];
    let b_a = bias_a.unwrap_or(&zero_bias);

    let (tau, bias) = match cfg.method {
        Method::Theseus => (transport_update(tau_a, &map)?, transport_bias(b_a, &map)?),
        Method::Pinv => (
            pinv_transport(&hin_a, &hout_a, &hin_b, &hout_b, tau_a, cfg.rcond)?,
            pinv_output_map(&hout_a, &hout_b, cfg.rcond)?.vec_mul(b_a)?,
        ),
        Method::PinvTikhonov => {
            let lam_in = cfg.lambda * gram_scale(&hin_b);
            let lam_out = cfg.lambda * gram_scale(&hout_b);
            let lam_src = cfg.lambda * gram_scale(&hout_a);
            let tau = tikhonov_transport_split(&hin_a, &hout_a, &hin_b, &hout_b, tau_a, lam_in, lam_out)?;
            (tau, tikhonov_output_map(&hout_a, &hout_b, lam_src)?.vec_mul(b_a)?)
        }
        Method::ZeroPad => (zero_pad_update(tau_a, d_out_b, d_in_b)?, zero_pad_bias(b_a, d_out_b)?),
        Method::Random => (
            random_update(d_out_b, d_in_b, norm, seed)?,
            random_vector(d_out_b, bias_norm, bseed)?,
        ),
        Method::RandomSource => (
            random_source_transport(&map, tau_a.shape(), norm, seed)?,
            random_source_bias(&map, bias_norm, bseed)?,
        ),
    };
    tau.ensure_finite("transported update")?;
    let bilinear = bilinear_residual(&hin_a, &hout_a, &hin_b, &hout_b, tau_a, &tau)?;
    Ok(LayerOut {
        report: LayerReport {
            layer: l,
            in_residual: map.in_residual,
            out_residual: map.out_residual,
            tau_norm_src: norm,
            tau_norm_dst: tau.frobenius_norm(),
            bilinear_residual: bilinear,
        },
        tau,
        bias: target_bias.then_some(bias),
    })
}

/// Builds `τ_B` layer by layer from paired calibration inputs.
pub fn transport_task_vector(
    theta_a: &Checkpoint,
    theta_a_ft: &Checkpoint,
    theta_b: &Checkpoint,
    calib_a: &Tensor3,
    calib_b: &Tensor3,
    cfg: &TransportConfig,
) -> Result<(TaskVector, TransportReport)> {
    transport_task_vector_with(theta_a, theta_a_ft, theta_b, calib_a, calib_b, cfg, Exec::default())
}

/// As [`transport_task_vector`], with layers spread over `exec`.
pub fn transport_task_vector_with(
    theta_a: &Checkpoint,
    theta_a_ft: &Checkpoint,
    theta_b: &Checkpoint,
    calib_a: &Tensor3,
    calib_b: &Tensor3,
    cfg: &TransportConfig,
    exec: Exec,
) -> Result<(TaskVector, TransportReport)> {
    cfg.validate()?;
    if theta_a.depth() != theta_b.depth() {
        return Err(Error::DepthMismatch {
            source_depth: theta_a.depth(),
            target_depth: theta_b.depth(),
        });
    }
    if calib_a.n() != calib_b.n() {
        return Err(Error::Dimension(format!(
            "calibration inputs hold {} and {} samples; both models need the same samples",
            calib_a.n(),
            calib_b.n()
        )));
    }
    let tau_a = task_vector(theta_a, theta_a_ft)?;
    let (_, rec_a) = forward_collect(theta_a, calib_a)?;
    let (_, rec_b) = forward_collect(theta_b, calib_b)?;

    let outs = exec.map(theta_a.depth(), |l| {
        transport_layer(
            l,
            &tau_a.deltas[l],
            tau_a.bias_deltas[l].as_deref(),
            theta_b.specs()[l].has_bias,
            (&rec_a[l].h_in, &rec_a[l].h_out),
            (&rec_b[l].h_in, &rec_b[l].h_out),
            cfg,
        )
        .map_err(|e| e.at_layer(l))
    });
    let mut deltas = Vec::with_capacity(outs.len());
    let mut bias_deltas = Vec::with_capacity(outs.len());
    let mut layers = Vec::with_capacity(outs.len());
    for out in outs {
        let out = out?;
        log::debug!(
            "layer {}: in {:.3e} out {:.3e} bilinear {:.3e}",
            out.report.layer,
            out.report.in_residual,
            out.report.out_residual,
            out.report.bilinear_residual
        );
        deltas.push(out.tau);
        bias_deltas.push(out.bias);
        layers.push(out.report);
    }
    Ok((
        TaskVector { deltas, bias_deltas },
        TransportReport { config: *cfg, layers },
    ))
}

/// `θ_B + α τ_B`, with the run's configuration and residuals recorded in the
/// metadata.
#[allow(clippy::too_many_arguments)]
pub fn transport_model(
    theta_a: &Checkpoint,
    theta_a_ft: &Checkpoint,
    theta_b: &Checkpoint,
    calib_a: &Tensor3,
    calib_b: &Tensor3,
    cfg: &TransportConfig,
    alpha: f64,
) -> Result<(Checkpoint, TransportReport)> {
    transport_model_with(
        theta_a,
        theta_a_ft,
        theta_b,
        calib_a,
        calib_b,
        cfg,
        alpha,
        Exec::default(),
    )
}

/// As [`transport_model`], with layers spread over `exec`.
#[allow(clippy::too_many_arguments)]
pub fn transport_model_with(
    theta_a: &Checkpoint,
    theta_a_ft: &Checkpoint,
    theta_b: &Checkpoint,
    calib_a: &Tensor3,
    calib_b: &Tensor3,
    cfg: &TransportConfig,
    alpha: f64,
    exec: Exec,
) -> Result<(Checkpoint, TransportReport)> {
    let (tau_b, report) = transport_task_vector_with(theta_a, theta_a_ft, theta_b, calib_a, calib_b, cfg, exec)?;
    let mut out = apply_update(theta_b, &tau_b, alpha)?;
    out.meta.insert("transport.method".into(), cfg.method.to_string());
    out.meta.insert("transport.strategy".into(), cfg.strategy.to_string());
    out.meta.insert("transport.lambda".into(), format!("{}", cfg.lambda));
    out.meta.insert("transport.rcond".into(), format!("{}", cfg.rcond));
    out.meta.insert("transport.seed".into(), cfg.seed.to_string());
    for r in &report.layers {
        out.meta.insert(
            format!("transport.layer{}.residuals", r.layer),
            format!("{:e},{:e},{:e}", r.in_residual, r.out_residual, r.bilinear_residual),
        );
    }
    Ok((out, report))
}
