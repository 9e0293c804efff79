use crate::error::{dim_err, Error, Result};
use crate::linalg::Matrix;
use crate::model::{forward, forward_collect, Activation, Checkpoint};
use crate::tensor::Tensor3;

/// Mean over tokens of the first `n_classes` output features.
pub fn logits(ckpt: &Checkpoint, inputs: &Tensor3, n_classes: usize) -> Result<Matrix> {
    let out = forward(ckpt, inputs)?;
    pool_logits(&out, n_classes)
}

fn pool_logits(out: &Tensor3, n_classes: usize) -> Result<Matrix> {
    let (n, l, d) = out.shape();
    if d < n_classes {
        return dim_err(format!("output width {d} is smaller than {n_classes} classes"));
    }
    let mut lg = Matrix::zeros(n, n_classes);
    for s in 0..n {
        let row = lg.row_mut(s);
        for t in 0..l {
            for (x, y) in row.iter_mut().zip(out.token(s, t)) {
                *x += y;
            }
        }
        row.iter_mut().for_each(|x| *x /= l as f64);
    }
    Ok(lg)
}

fn check_labels(labels: &[usize], n: usize, n_classes: usize) -> Result<()> {
    if labels.len() != n {
        return dim_err(format!("{} labels for {n} samples", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside {n_classes} classes"
        )));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(ckpt: &Checkpoint, inputs: &Tensor3, n_classes: usize) -> Result<Vec<usize>> {
    let lg = logits(ckpt, inputs, n_classes)?;
    Ok((0..lg.rows()).map(|r| argmax(lg.row(r))).collect())
}

pub fn accuracy(ckpt: &Checkpoint, inputs: &Tensor3, labels: &[usize], n_classes: usize) -> Result<f64> {
    check_labels(labels, inputs.n(), n_classes)?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let pred = predict(ckpt, inputs, n_classes)?;
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean cross-entropy and `∂loss/∂logits`.
fn softmax_xent(lg: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = lg.rows();
    let mut grad = Matrix::zeros(n, lg.cols());
    let mut loss = 0.0;
    for s in 0..n {
        let row = lg.row(s);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
        loss += z.ln() + m - row[labels[s]];
        let g = grad.row_mut(s);
        for (gi, x) in g.iter_mut().zip(row) {
            *gi = (x - m).exp() / z / n as f64;
        }
        g[labels[s]] -= 1.0 / n as f64;
    }
    (loss / n as f64, grad)
}

pub fn loss(ckpt: &Checkpoint, inputs: &Tensor3, labels: &[usize], n_classes: usize) -> Result<f64> {
    check_labels(labels, inputs.n(), n_classes)?;
    Ok(softmax_xent(&logits(ckpt, inputs, n_classes)?, labels).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Vec<f64>>>,
}

/// Loss and exact parameter gradients by backpropagation through the stack.
pub fn loss_and_gradients(
    ckpt: &Checkpoint,
    inputs: &Tensor3,
    labels: &[usize],
    n_classes: usize,
) -> Result<(f64, Gradients)> {
    check_labels(labels, inputs.n(), n_classes)?;
    let (out, records) = forward_collect(ckpt, inputs)?;
    let (n, l, d) = out.shape();
    let (loss, g) = softmax_xent(&pool_logits(&out, n_classes)?, labels);

    let mut dout = Matrix::zeros(n * l, d);
    for s in 0..n {
        for t in 0..l {
            for (x, y) in dout.row_mut(s * l + t).iter_mut().zip(g.row(s)) {
                *x = y / l as f64;
            }
        }
    }
    let depth = ckpt.depth();
    let mut weights = vec![Matrix::zeros(0, 0); depth];
    let mut biases = vec![None; depth];
    for (li, rec) in records.into_iter().enumerate().rev() {
        let dz = match ckpt.specs()[li].activation {
            Activation::Identity => dout,
            Activation::Relu => {
                let z = rec.h_out.as_slice();
                let mut dz = dout;
                for (x, &zv) in dz.as_mut_slice().iter_mut().zip(z) {
                    if zv <= 0.0 {
                        *x = 0.0;
                    }
                }
                dz
            }
        };
        let h = rec.h_in.into_matrix();
        weights[li] = dz.t_matmul(&h)?;
        if ckpt.specs()[li].has_bias {
            let mut db = vec![0.0; dz.cols()];
            for r in 0..dz.rows() {
                for (x, y) in db.iter_mut().zip(dz.row(r)) {
                    *x += y;
                }
            }
            biases[li] = Some(db);
        }
        dout = if li > 0 {
            dz.matmul(ckpt.weight(li))?
        } else {
            Matrix::zeros(0, 0)
        };
    }
    Ok((loss, Gradients { weights, biases }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub n_classes: usize,
}

fn step(ckpt: &Checkpoint, g: &Gradients, lr: f64) -> Result<Checkpoint> {
    let weights = ckpt
        .weights()
        .iter()
        .zip(&g.weights)
        .map(|(w, d)| w.add_scaled(d, -lr))
        .collect::<Result<Vec<_>>>()?;
    let biases = ckpt
        .biases()
        .iter()
        .zip(&g.biases)
        .map(|(b, d)| match (b, d) {
            (Some(b), Some(d)) => Some(b.iter().zip(d).map(|(x, y)| x - lr * y).collect()),
            (b, _) => b.clone(),
        })
        .collect();
    ckpt.with_params(weights, biases)
}

/// Full-batch gradient descent on softmax cross-entropy. `on_step(t, θ_t)`
/// sees the parameters before step `t` and, last, the final parameters at
/// `t = steps`.
pub fn train_traced(
    ckpt: &Checkpoint,
    inputs: &Tensor3,
    labels: &[usize],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be > 0, got {}",
            cfg.lr
        )));
    }
    let mut cur = ckpt.clone();
    let mut first = None;
    for t in 0..cfg.steps {
        on_step(t, &cur)?;
        let (loss, g) = loss_and_gradients(&cur, inputs, labels, cfg.n_classes)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step: t,
                message: format!("loss is {loss}"),
            });
        }
        first.get_or_insert(loss);
        cur = step(&cur, &g, cfg.lr).map_err(|e| Error::Training {
            step: t,
            message: e.to_string(),
        })?;
    }
    on_step(cfg.steps, &cur)?;
    if let Some(initial) = first {
        let last = loss(&cur, inputs, labels, cfg.n_classes)?;
        if !last.is_finite() || last >= initial {
            return Err(Error::Training {
                step: cfg.steps,
                message: format!("loss did not decrease ({initial:.6} -> {last:.6})"),
            });
        }
        log::debug!("trained {} steps: loss {initial:.4} -> {last:.4}", cfg.steps);
    }
    Ok(cur)
}

pub fn train_classifier(
    ckpt: &Checkpoint,
    inputs: &Tensor3,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    train_traced(ckpt, inputs, labels, cfg, |_, _| Ok(()))
}
