//! Trainable spectral-filter model over frozen DMD modes.
//!
//! The filter applies Psi diag(theta) Psi^T to node features as three thin
//! products; the N x N operator is never materialized. All gradients are
//! derived analytically and checked against central finite differences.

use crate::error::{Error, Result};
use crate::kernels::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// dense-in (+relu, dropout) -> filter -> dense-out
    Standard,
    /// filter -> dense (+relu, dropout) -> dense
    ConvFirst,
}

/// Spectral-filter model: frozen modes, trainable filter diagonal theta,
/// and two dense layers whose order depends on the architecture.
#[derive(Debug, Clone)]
pub struct DmdGnnModel {
    pub arch: Arch,
    /// Frozen DMD modes, N x r.
    pub modes: Matrix,
    /// Trainable filter diagonal, length r.
    pub theta: Vec<f64>,
    pub dense: Vec<DenseLayer>,
    pub dropout_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Wce,
    Mse,
    Bce,
}

impl DmdGnnModel {
    /// Fresh model: theta starts at all-ones (an identity-like filter) and
    /// dense weights at symmetric uniform fan-in scale. Biases start at 0.
    pub fn new(
        arch: Arch,
        modes: Matrix,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        dropout_p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::Contract(format!("dropout must lie in [0,1), got {dropout_p}")));
        }
        let r = modes.cols();
        let dims = [(in_dim, hidden_dim), (hidden_dim, out_dim)];
        let dense = dims
            .iter()
            .enumerate()
            .map(|(li, &(fan_in, fan_out))| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                DenseLayer {
                    w: Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound)),
                    b: vec![0.0; fan_out],
                    act: if li == 0 { Activation::Relu } else { Activation::None },
                }
            })
            .collect();
        Ok(DmdGnnModel { arch, modes, theta: vec![1.0; r], dense, dropout_p })
    }

    pub fn num_nodes(&self) -> usize {
        self.modes.rows()
    }

    /// Parameter tensors in a fixed order: theta, then (w, b) per layer.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["theta".to_string()];
        for i in 0..self.dense.len() {
            names.push(format!("dense{i}.w"));
            names.push(format!("dense{i}.b"));
        }
        names
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.theta];
        for l in &self.dense {
            out.push(l.w.data());
            out.push(&l.b);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.theta];
        for l in &mut self.dense {
            out.push(l.w.data_mut());
            out.push(&mut l.b);
        }
        out
    }

    /// True for tensors that weight decay applies to: dense weight
    /// matrices only. Decaying theta would shrink the filter toward zero,
    /// and biases are conventionally left alone.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false];
        for _ in &self.dense {
            mask.push(true);
            mask.push(false);
        }
        mask
    }
}

/// Psi diag(theta) Psi^T h w, as three thin products.
pub fn filter_forward(modes: &Matrix, theta: &[f64], h: &Matrix, w: &Matrix) -> Result<Matrix> {
    let (out, _cache) = filter_forward_cached(modes, theta, h, w)?;
    Ok(out)
}

pub struct FilterCache {
    /// Psi^T h, r x d.
    pub pt_h: Matrix,
    /// Psi diag(theta) Psi^T h, N x d.
    pub filtered: Matrix,
}

pub fn filter_forward_cached(
    modes: &Matrix,
    theta: &[f64],
    h: &Matrix,
    w: &Matrix,
) -> Result<(Matrix, FilterCache)> {
    if modes.cols() != theta.len() {
        return Err(Error::Contract(format!(
            "theta length {} does not match mode count {}",
            theta.len(),
            modes.cols()
        )));
    }
    if modes.rows() != h.rows() || h.cols() != w.rows() {
        return Err(Error::Contract(format!(
            "filter shapes do not chain: modes {}x{}, h {}x{}, w {}x{}",
            modes.rows(),
            modes.cols(),
            h.rows(),
            h.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let pt_h = modes.tr_matmul(h);
    let mut scaled = pt_h.clone();
    for (k, t) in theta.iter().enumerate() {
        for v in scaled.row_mut(k) {
            *v *= t;
        }
    }
    let filtered = modes.matmul(&scaled);
    let out = filtered.matmul(w);
    Ok((out, FilterCache { pt_h, filtered }))
}

/// Analytic gradients of the filter product. Returns
/// (grad_theta, grad_h, grad_w).
pub fn filter_backward(
    modes: &Matrix,
    theta: &[f64],
    w: &Matrix,
    cache: &FilterCache,
    grad_out: &Matrix,
) -> (Vec<f64>, Matrix, Matrix) {
    let grad_w = cache.filtered.tr_matmul(grad_out);
    let grad_filtered = grad_out.matmul(&w.transpose());
    let grad_scaled = modes.tr_matmul(&grad_filtered);
    // d/d theta_k = sum_j grad_scaled[k,j] * pt_h[k,j]
    let grad_theta: Vec<f64> = (0..theta.len())
        .map(|k| {
            grad_scaled
                .row(k)
                .iter()
                .zip(cache.pt_h.row(k))
                .map(|(g, p)| g * p)
                .sum()
        })
        .collect();
    let mut grad_pt_h = grad_scaled;
    for (k, t) in theta.iter().enumerate() {
        for v in grad_pt_h.row_mut(k) {
            *v *= t;
        }
    }
    let grad_h = modes.matmul(&grad_pt_h);
    (grad_theta, grad_h, grad_w)
}

/// The bare spectral step used inside the model (w = identity).
fn spectral_step(modes: &Matrix, theta: &[f64], h: &Matrix) -> Result<(Matrix, FilterCache)> {
    filter_forward_cached(modes, theta, h, &Matrix::identity(h.cols()))
}

fn dense_forward(layer: &DenseLayer, h: &Matrix) -> (Matrix, Matrix) {
    let mut pre = h.matmul(&layer.w);
    for i in 0..pre.rows() {
        for (j, b) in layer.b.iter().enumerate() {
            pre[(i, j)] += b;
        }
    }
    let post = match layer.act {
        Activation::Relu => pre.map(|v| v.max(0.0)),
        Activation::None => pre.clone(),
    };
    (pre, post)
}

/// Gradients for one dense layer. Returns (grad_w, grad_b, grad_input).
fn dense_backward(
    layer: &DenseLayer,
    input: &Matrix,
    pre: &Matrix,
    grad_post: &Matrix,
) -> (Matrix, Vec<f64>, Matrix) {
    let grad_pre = match layer.act {
        Activation::Relu => Matrix::from_fn(pre.rows(), pre.cols(), |i, j| {
            if pre[(i, j)] > 0.0 {
                grad_post[(i, j)]
            } else {
                0.0
            }
        }),
        Activation::None => grad_post.clone(),
    };
    let grad_w = input.tr_matmul(&grad_pre);
    let grad_b: Vec<f64> = (0..layer.b.len())
        .map(|j| (0..grad_pre.rows()).map(|i| grad_pre[(i, j)]).sum())
        .collect();
    let grad_input = grad_pre.matmul(&layer.w.transpose());
    (grad_w, grad_b, grad_input)
}

/// Inverted-scaling dropout mask: entries are 0 with probability p and
/// 1/(1-p) otherwise.
fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let keep = 1.0 - p;
    Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p { 0.0 } else { 1.0 / keep })
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ModelCache {
    input: Matrix,
    stage_inputs: Vec<Matrix>,
    dense_pre: Vec<Matrix>,
    filter: FilterCache,
    dropout: Option<Matrix>,
    pub logits: Matrix,
}

/// Forward pass. Dropout is active only in train mode and draws its masks
/// from `rng`; eval mode is deterministic and leaves `rng` untouched.
pub fn model_forward(
    model: &DmdGnnModel,
    features: &Matrix,
    train_mode: bool,
    rng: &mut ChaCha8Rng,
) -> Result<ModelCache> {
    let use_dropout = train_mode && model.dropout_p > 0.0;
    let mut dropout = None;
    let mut stage_inputs = Vec::new();
    let mut dense_pre = Vec::new();

    let (logits, filter) = match model.arch {
        Arch::Standard => {
            let (pre0, mut h) = dense_forward(&model.dense[0], features);
            dense_pre.push(pre0);
            if use_dropout {
                let mask = dropout_mask(h.rows(), h.cols(), model.dropout_p, rng);
                h = h.hadamard(&mask);
                dropout = Some(mask);
            }
            stage_inputs.push(h.clone());
            let (filtered, fcache) = spectral_step(&model.modes, &model.theta, &h)?;
            stage_inputs.push(filtered.clone());
            let (pre1, out) = dense_forward(&model.dense[1], &filtered);
            dense_pre.push(pre1);
            (out, fcache)
        }
        Arch::ConvFirst => {
            let (filtered, fcache) = spectral_step(&model.modes, &model.theta, features)?;
            stage_inputs.push(filtered.clone());
            let (pre0, mut h) = dense_forward(&model.dense[0], &filtered);
            dense_pre.push(pre0);
            if use_dropout {
                let mask = dropout_mask(h.rows(), h.cols(), model.dropout_p, rng);
                h = h.hadamard(&mask);
                dropout = Some(mask);
            }
            stage_inputs.push(h.clone());
            let (pre1, out) = dense_forward(&model.dense[1], &h);
            dense_pre.push(pre1);
            (out, fcache)
        }
    };
    Ok(ModelCache { input: features.clone(), stage_inputs, dense_pre, filter, dropout, logits })
}

/// Gradients aligned with [`DmdGnnModel::params`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub theta: Vec<f64>,
    pub dense: Vec<(Matrix, Vec<f64>)>,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.theta];
        for (w, b) in &self.dense {
            out.push(w.data());
            out.push(b);
        }
        out
    }
}

/// Backward pass for the given upstream gradient on the logits.
pub fn model_backward(model: &DmdGnnModel, cache: &ModelCache, grad_logits: &Matrix) -> ModelGrads {
    let identity_w = Matrix::identity(cache.filter.filtered.cols());
    match model.arch {
        Arch::Standard => {
            let (gw1, gb1, grad_filtered) = dense_backward(
                &model.dense[1],
                &cache.stage_inputs[1],
                &cache.dense_pre[1],
                grad_logits,
            );
            let (grad_theta, grad_h, _gw_id) = filter_backward(
                &model.modes,
                &model.theta,
                &identity_w,
                &cache.filter,
                &grad_filtered,
            );
            let grad_h = match &cache.dropout {
                Some(mask) => grad_h.hadamard(mask),
                None => grad_h,
            };
            let (gw0, gb0, _) =
                dense_backward(&model.dense[0], &cache.input, &cache.dense_pre[0], &grad_h);
            ModelGrads { theta: grad_theta, dense: vec![(gw0, gb0), (gw1, gb1)] }
        }
        Arch::ConvFirst => {
            let (gw1, gb1, grad_h) = dense_backward(
                &model.dense[1],
                &cache.stage_inputs[1],
                &cache.dense_pre[1],
                grad_logits,
            );
            let grad_h = match &cache.dropout {
                Some(mask) => grad_h.hadamard(mask),
                None => grad_h,
            };
            let (gw0, gb0, grad_filtered) = dense_backward(
                &model.dense[0],
                &cache.stage_inputs[0],
                &cache.dense_pre[0],
                &grad_h,
            );
            let (grad_theta, _grad_x, _gw_id) = filter_backward(
                &model.modes,
                &model.theta,
                &identity_w,
                &cache.filter,
                &grad_filtered,
            );
            ModelGrads { theta: grad_theta, dense: vec![(gw0, gb0), (gw1, gb1)] }
        }
    }
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Classification / regression targets for [`loss_and_grad`].
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(&'a Matrix),
}

/// Mean-reduced loss and its analytic gradient with respect to the logits.
///
/// `class_weights` is required for `Wce` (one weight per class) and
/// ignored otherwise; the weighted mean divides by the total weight of the
/// batch, so all-ones weights reduce exactly to `Ce`.
pub fn loss_and_grad(
    kind: LossKind,
    logits: &Matrix,
    targets: &Targets,
    class_weights: Option<&[f64]>,
) -> Result<(f64, Matrix)> {
    match (kind, targets) {
        (LossKind::Ce | LossKind::Wce, Targets::Classes(labels)) => {
            if labels.len() != logits.rows() {
                return Err(Error::Contract(format!(
                    "{} labels for {} logit rows",
                    labels.len(),
                    logits.rows()
                )));
            }
            let c = logits.cols();
            if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                return Err(Error::Contract(format!(
                    "class index {bad} out of range for {c} classes"
                )));
            }
            let weights: Vec<f64> = match kind {
                LossKind::Wce => {
                    let w = class_weights
                        .ok_or_else(|| Error::Contract("wce requires class weights".into()))?;
                    if w.len() != c {
                        return Err(Error::Contract(format!(
                            "{} class weights for {c} classes",
                            w.len()
                        )));
                    }
                    w.to_vec()
                }
                _ => vec![1.0; c],
            };
            let probs = softmax_rows(logits);
            let total_w: f64 = labels.iter().map(|&y| weights[y]).sum();
            if total_w <= 0.0 {
                return Err(Error::Contract("total class weight must be positive".into()));
            }
            let mut loss = 0.0;
            let mut grad = Matrix::zeros(logits.rows(), c);
            for (i, &y) in labels.iter().enumerate() {
                loss -= weights[y] * probs[(i, y)].max(1e-300).ln();
                let wy = weights[y];
                for j in 0..c {
                    grad[(i, j)] = wy * (probs[(i, j)] - if j == y { 1.0 } else { 0.0 }) / total_w;
                }
            }
            Ok((loss / total_w, grad))
        }
        (LossKind::Mse, Targets::Values(t)) => {
            if (t.rows(), t.cols()) != (logits.rows(), logits.cols()) {
                return Err(Error::Contract("mse target shape mismatch".into()));
            }
            let count = (logits.rows() * logits.cols()) as f64;
            let diff = logits.sub(t);
            let loss = diff.data().iter().map(|v| v * v).sum::<f64>() / count;
            Ok((loss, diff.scale(2.0 / count)))
        }
        (LossKind::Bce, Targets::Values(t)) => {
            if (t.rows(), t.cols()) != (logits.rows(), logits.cols()) {
                return Err(Error::Contract("bce target shape mismatch".into()));
            }
            let count = (logits.rows() * logits.cols()) as f64;
            let mut loss = 0.0;
            let mut grad = Matrix::zeros(logits.rows(), logits.cols());
            for i in 0..logits.rows() {
                for j in 0..logits.cols() {
                    let z = logits[(i, j)];
                    let y = t[(i, j)];
                    // stable max(z,0) - z y + log(1 + e^{-|z|}) form
                    loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                    let sig = 1.0 / (1.0 + (-z).exp());
                    grad[(i, j)] = (sig - y) / count;
                }
            }
            Ok((loss / count, grad))
        }
        _ => Err(Error::Contract("loss kind does not match target type".into())),
    }
}

/// Adam with L2-in-gradient weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(tensor_sizes: &[usize], lr: f64, weight_decay: f64) -> Self {
        AdamState {
            m: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One optimizer step over all tensors. `decay_mask[k]` gates whether
    /// weight decay is folded into tensor k's gradient.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], decay_mask: &[bool]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let decay = if decay_mask[k] { self.weight_decay } else { 0.0 };
            for i in 0..param.len() {
                let g = grad[i] + decay * param[i];
                self.m[k][i] = self.beta1 * self.m[k][i] + (1.0 - self.beta1) * g;
                self.v[k][i] = self.beta2 * self.v[k][i] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[k][i] / bc1;
                let v_hat = self.v[k][i] / bc2;
                param[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Loss of the model on (features, targets) in eval mode; the scalar
/// function that grad_check differentiates.
pub fn model_loss(
    model: &DmdGnnModel,
    features: &Matrix,
    kind: LossKind,
    targets: &Targets,
    class_weights: Option<&[f64]>,
) -> Result<f64> {
    let mut rng = crate::rng::stream(0, "unused");
    let cache = model_forward(model, features, false, &mut rng)?;
    Ok(loss_and_grad(kind, &cache.logits, targets, class_weights)?.0)
}

/// Analytic loss gradients in eval mode for all parameters.
pub fn model_loss_grads(
    model: &DmdGnnModel,
    features: &Matrix,
    kind: LossKind,
    targets: &Targets,
    class_weights: Option<&[f64]>,
) -> Result<(f64, ModelGrads)> {
    let mut rng = crate::rng::stream(0, "unused");
    let cache = model_forward(model, features, false, &mut rng)?;
    let (loss, grad_logits) = loss_and_grad(kind, &cache.logits, targets, class_weights)?;
    Ok((loss, model_backward(model, &cache, &grad_logits)))
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// (tensor name, max relative error) per parameter tensor.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compare analytic gradients against central finite differences on the
/// full loss, with the default step of 1e-6. Meant for small instances
/// (N <= 30).
pub fn grad_check(
    model: &DmdGnnModel,
    features: &Matrix,
    kind: LossKind,
    targets: &Targets,
    class_weights: Option<&[f64]>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    grad_check_with_step(model, features, kind, targets, class_weights, tolerance, 1e-6)
}

/// [`grad_check`] with an explicit central-difference step. Tolerances at
/// or below 1e-6 need a step near the cancellation optimum (~1e-5 for
/// losses of order one).
pub fn grad_check_with_step(
    model: &DmdGnnModel,
    features: &Matrix,
    kind: LossKind,
    targets: &Targets,
    class_weights: Option<&[f64]>,
    tolerance: f64,
    fd_step: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = model_loss_grads(model, features, kind, targets, class_weights)?;
    let analytic_tensors: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let names = model.param_names();
    let mut probe = model.clone();
    let mut per_tensor = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = probe.params()[k].len();
        let mut worst = 0.0_f64;
        for i in 0..len {
            let orig = probe.params()[k][i];
            probe.params_mut()[k][i] = orig + fd_step;
            let up = model_loss(&probe, features, kind, targets, class_weights)?;
            probe.params_mut()[k][i] = orig - fd_step;
            let down = model_loss(&probe, features, kind, targets, class_weights)?;
            probe.params_mut()[k][i] = orig;
            let fd = (up - down) / (2.0 * fd_step);
            let a = analytic_tensors[k][i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        per_tensor.push((name.clone(), worst));
    }
    let max_rel_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport { per_tensor, max_rel_error, tolerance, pass: max_rel_error <= tolerance })
}
