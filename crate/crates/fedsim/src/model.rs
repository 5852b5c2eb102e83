//! Small differentiable classifiers with deterministic initialization and
//! local SGD training.
//!
//! Two architectures: multinomial logistic regression and a one-hidden-layer
//! ReLU network. Parameters live in a flat [`ParamVec`], laid out layer by
//! layer as weights (row-major, one row per output unit) followed by biases.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::param_math::ParamVec;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Logistic,
    Mlp1,
}

/// Architecture description; parameter dimension is a function of the fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArch {
    pub kind: ArchKind,
    pub input_dim: usize,
    /// Hidden width; ignored for logistic regression.
    #[serde(default)]
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidParameter("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.kind == ArchKind::Mlp1 && self.hidden_dim == 0 {
            return Err(Error::InvalidParameter(
                "mlp1 needs a positive hidden_dim".into(),
            ));
        }
        Ok(())
    }

    /// Total parameter count: per layer, weights plus biases.
    pub fn param_dim(&self) -> usize {
        match self.kind {
            ArchKind::Logistic => self.num_classes * self.input_dim + self.num_classes,
            ArchKind::Mlp1 => {
                self.hidden_dim * self.input_dim
                    + self.hidden_dim
                    + self.num_classes * self.hidden_dim
                    + self.num_classes
            }
        }
    }

    /// (weight offset, bias offset, fan_in, fan_out) per layer.
    fn layers(&self) -> Vec<(usize, usize, usize, usize)> {
        match self.kind {
            ArchKind::Logistic => {
                let w = self.num_classes * self.input_dim;
                vec![(0, w, self.input_dim, self.num_classes)]
            }
            ArchKind::Mlp1 => {
                let w1 = self.hidden_dim * self.input_dim;
                let b1 = self.hidden_dim;
                let w2 = self.num_classes * self.hidden_dim;
                vec![
                    (0, w1, self.input_dim, self.hidden_dim),
                    (w1 + b1, w1 + b1 + w2, self.hidden_dim, self.num_classes),
                ]
            }
        }
    }
}

/// Local SGD settings for one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTrainConfig {
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl LocalTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::InvalidParameter(
                "local_epochs must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean cross-entropy over the dataset.
    pub loss: f64,
    /// Exact fraction of correctly classified records; argmax ties go to
    /// the lowest class index.
    pub accuracy: f64,
}

/// Glorot-style uniform init: weights from uniform(-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)) per layer, biases exactly zero.
pub fn init_params(arch: &ModelArch, seed: u64) -> Result<ParamVec> {
    arch.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut values = vec![0.0; arch.param_dim()];
    for (w_start, b_start, fan_in, fan_out) in arch.layers() {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut values[w_start..b_start] {
            *v = rng.uniform(-a, a);
        }
        // Biases at b_start..b_start+fan_out stay zero.
    }
    ParamVec::new(values)
}

fn check_shapes(arch: &ModelArch, params: &ParamVec, data: &Dataset) -> Result<()> {
    arch.validate()?;
    if params.dim() != arch.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: arch.param_dim(),
            got: params.dim(),
        });
    }
    if data.input_dim() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            got: data.input_dim(),
        });
    }
    if data.num_classes() > arch.num_classes {
        return Err(Error::InvalidParameter(format!(
            "dataset has {} classes but the model only {}",
            data.num_classes(),
            arch.num_classes
        )));
    }
    Ok(())
}

/// Scratch buffers reused across forward/backward passes.
struct Workspace {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    log_probs: Vec<f64>,
    delta_out: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Workspace {
    fn new(arch: &ModelArch) -> Workspace {
        Workspace {
            hidden: vec![0.0; arch.hidden_dim],
            logits: vec![0.0; arch.num_classes],
            log_probs: vec![0.0; arch.num_classes],
            delta_out: vec![0.0; arch.num_classes],
            delta_hidden: vec![0.0; arch.hidden_dim],
        }
    }
}

/// Fills `ws.logits` (and `ws.hidden` for mlp1) from one input row.
fn forward(arch: &ModelArch, params: &[f64], x: &[f64], ws: &mut Workspace) {
    match arch.kind {
        ArchKind::Logistic => {
            let (d, k) = (arch.input_dim, arch.num_classes);
            let b = k * d;
            for c in 0..k {
                let row = &params[c * d..(c + 1) * d];
                let mut z = params[b + c];
                for (w, xi) in row.iter().zip(x) {
                    z += w * xi;
                }
                ws.logits[c] = z;
            }
        }
        ArchKind::Mlp1 => {
            let (d, h, k) = (arch.input_dim, arch.hidden_dim, arch.num_classes);
            let b1 = h * d;
            let w2 = b1 + h;
            let b2 = w2 + k * h;
            for j in 0..h {
                let row = &params[j * d..(j + 1) * d];
                let mut z = params[b1 + j];
                for (w, xi) in row.iter().zip(x) {
                    z += w * xi;
                }
                ws.hidden[j] = z.max(0.0); // ReLU
            }
            for c in 0..k {
                let row = &params[w2 + c * h..w2 + (c + 1) * h];
                let mut z = params[b2 + c];
                for (w, hj) in row.iter().zip(&ws.hidden) {
                    z += w * hj;
                }
                ws.logits[c] = z;
            }
        }
    }
}

/// Log-softmax with max subtraction, written into `ws.log_probs`.
fn log_softmax(ws: &mut Workspace) {
    let max = ws.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = ws.logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum_exp.ln();
    for (lp, &z) in ws.log_probs.iter_mut().zip(&ws.logits) {
        *lp = z - lse;
    }
}

/// Cross-entropy of one sample; adds `scale * gradient` into `grad`.
fn add_grad_sample(
    arch: &ModelArch,
    params: &[f64],
    x: &[f64],
    y: usize,
    scale: f64,
    grad: &mut [f64],
    ws: &mut Workspace,
) -> f64 {
    forward(arch, params, x, ws);
    log_softmax(ws);
    let loss = -ws.log_probs[y];
    for c in 0..arch.num_classes {
        ws.delta_out[c] = ws.log_probs[c].exp() - if c == y { 1.0 } else { 0.0 };
    }
    match arch.kind {
        ArchKind::Logistic => {
            let (d, k) = (arch.input_dim, arch.num_classes);
            let b = k * d;
            for c in 0..k {
                let g = scale * ws.delta_out[c];
                for (gw, xi) in grad[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *gw += g * xi;
                }
                grad[b + c] += g;
            }
        }
        ArchKind::Mlp1 => {
            let (d, h, k) = (arch.input_dim, arch.hidden_dim, arch.num_classes);
            let b1 = h * d;
            let w2 = b1 + h;
            let b2 = w2 + k * h;
            for dh in ws.delta_hidden.iter_mut() {
                *dh = 0.0;
            }
            for c in 0..k {
                let g = ws.delta_out[c];
                let row = &params[w2 + c * h..w2 + (c + 1) * h];
                for (dh, &w) in ws.delta_hidden.iter_mut().zip(row) {
                    *dh += w * g;
                }
                for (gw, hj) in grad[w2 + c * h..w2 + (c + 1) * h].iter_mut().zip(&ws.hidden) {
                    *gw += scale * g * hj;
                }
                grad[b2 + c] += scale * g;
            }
            for j in 0..h {
                // ReLU gradient: zero wherever the unit was inactive.
                if ws.hidden[j] <= 0.0 {
                    continue;
                }
                let g = scale * ws.delta_hidden[j];
                for (gw, xi) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gw += g * xi;
                }
                grad[b1 + j] += g;
            }
        }
    }
    loss
}

/// Plain SGD: `local_epochs` full passes over the shard in seeded-shuffled
/// mini-batches, stepping on the mean cross-entropy gradient of each batch.
/// The input parameters are left untouched.
pub fn train_local(
    arch: &ModelArch,
    params: &ParamVec,
    data: &Dataset,
    cfg: &LocalTrainConfig,
) -> Result<ParamVec> {
    check_shapes(arch, params, data)?;
    cfg.validate()?;
    let n = data.len();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut ws = Workspace::new(arch);
    let mut out = params.as_slice().to_vec();
    let mut grad = vec![0.0; out.len()];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.local_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                add_grad_sample(arch, &out, data.row(i), data.label(i), scale, &mut grad, &mut ws);
            }
            for (p, g) in out.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
    }
    ParamVec::new(out)
}

/// Mean cross-entropy and exact accuracy on a dataset.
pub fn evaluate(arch: &ModelArch, params: &ParamVec, data: &Dataset) -> Result<EvalResult> {
    check_shapes(arch, params, data)?;
    let mut ws = Workspace::new(arch);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        forward(arch, params.as_slice(), data.row(i), &mut ws);
        log_softmax(&mut ws);
        loss_sum -= ws.log_probs[data.label(i)];
        let mut best = 0;
        for c in 1..arch.num_classes {
            if ws.logits[c] > ws.logits[best] {
                best = c;
            }
        }
        if best == data.label(i) {
            correct += 1;
        }
    }
    Ok(EvalResult {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Per-class probabilities for one input row.
pub fn predict_proba(arch: &ModelArch, params: &ParamVec, x: &[f64]) -> Vec<f64> {
    let mut ws = Workspace::new(arch);
    forward(arch, params.as_slice(), x, &mut ws);
    log_softmax(&mut ws);
    ws.log_probs.iter().map(|&lp| lp.exp()).collect()
}

/// Single-sample cross-entropy, used by the finite-difference check.
fn sample_loss(arch: &ModelArch, params: &[f64], x: &[f64], y: usize, ws: &mut Workspace) -> f64 {
    forward(arch, params, x, ws);
    log_softmax(ws);
    -ws.log_probs[y]
}

/// Max absolute difference between the analytic gradient and a central
/// finite difference (h = 1e-5) over every coordinate, for one sample.
pub fn numeric_grad_check(arch: &ModelArch, params: &ParamVec, x: &[f64], y: usize) -> f64 {
    const H: f64 = 1e-5;
    let mut ws = Workspace::new(arch);
    let mut analytic = vec![0.0; params.dim()];
    add_grad_sample(arch, params.as_slice(), x, y, 1.0, &mut analytic, &mut ws);
    let mut perturbed = params.as_slice().to_vec();
    let mut worst = 0.0f64;
    for k in 0..perturbed.len() {
        let orig = perturbed[k];
        perturbed[k] = orig + H;
        let up = sample_loss(arch, &perturbed, x, y, &mut ws);
        perturbed[k] = orig - H;
        let down = sample_loss(arch, &perturbed, x, y, &mut ws);
        perturbed[k] = orig;
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((analytic[k] - fd).abs());
    }
    worst
}
