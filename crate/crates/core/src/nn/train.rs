//! Loss, backpropagation, gradient routing, and the SGD / AdamW training
//! loops for the MLP sandbox. Gradients are computed for every layer's
//! effective weight, then routed into whatever parameterization the layer
//! trains: dense increments take the gradient as-is, masked layers keep only
//! the entries on their coordinate list, and low-rank adapters receive the
//! chain-rule products with their factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::scatter_grad;
use crate::nn::model::{LayerTrain, MlpModel};
use crate::nn::task::{Dataset, SyntheticTask, Targets};
use crate::tensor::{dist2, DenseMatrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    SquaredError,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    AdamW {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    /// AdamW with beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8 and no decay.
    pub fn adamw_default() -> Self {
        OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Kept explicit: the schedule is constant, no warmup or decay.
    pub constant_schedule: bool,
    /// Loss level that flags divergence; None means 1e6 x initial loss.
    pub divergence_cap: Option<f64>,
    /// Optional early stop once the full train loss reaches this value.
    pub loss_target: Option<f64>,
    pub loss_kind: LossKind,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerKind, learning_rate: f64, epochs: usize, batch_size: usize) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(Self {
            optimizer,
            learning_rate,
            epochs,
            batch_size,
            constant_schedule: true,
            divergence_cap: None,
            loss_target: None,
            loss_kind: LossKind::CrossEntropy,
        })
    }

    pub fn with_loss_target(mut self, target: f64) -> Self {
        self.loss_target = Some(target);
        self
    }
}

/// Gradient of the loss with respect to each layer's effective weight/bias.
pub struct LayerGrads {
    pub d_weight: DenseMatrix,
    pub d_bias: Vec<f64>,
}

/// Forward + backward over a batch; returns the loss and per-layer dense
/// gradients with respect to the effective weights.
pub fn loss_and_layer_grads(
    model: &MlpModel,
    inputs: &DenseMatrix,
    targets: &Targets,
    kind: LossKind,
) -> Result<(f64, Vec<LayerGrads>)> {
    let acts = model.forward(inputs)?;
    let batch = inputs.rows() as f64;
    let logits = acts.last().unwrap();

    // Non-finite logits make the loss undefined; report NaN with zero
    // gradients so callers flag the step instead of training on garbage.
    if logits.as_slice().iter().any(|v| !v.is_finite()) {
        let zero_grads = model
            .layers
            .iter()
            .map(|l| LayerGrads {
                d_weight: DenseMatrix::zeros(l.out_dim(), l.in_dim()),
                d_bias: vec![0.0; l.out_dim()],
            })
            .collect();
        return Ok((f64::NAN, zero_grads));
    }

    // delta at the output layer, d loss / d logits.
    let (loss, mut delta) = match (kind, targets) {
        (LossKind::CrossEntropy, Targets::Labels(labels)) => {
            if labels.len() != inputs.rows() {
                return Err(Error::invalid("label count does not match batch"));
            }
            let classes = logits.cols();
            let mut delta = DenseMatrix::zeros(logits.rows(), classes);
            let mut loss = 0.0;
            for s in 0..logits.rows() {
                let row = logits.row(s);
                let maxv = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let exps: Vec<f64> = row.iter().map(|v| (v - maxv).exp()).collect();
                let z: f64 = exps.iter().sum();
                let y = labels[s];
                if y >= classes {
                    return Err(Error::invalid(format!("label {y} out of range")));
                }
                loss += -(exps[y] / z).max(1e-300).ln();
                for c in 0..classes {
                    let p = exps[c] / z;
                    delta.set(s, c, (p - if c == y { 1.0 } else { 0.0 }) / batch);
                }
            }
            (loss / batch, delta)
        }
        (LossKind::SquaredError, Targets::Values(values)) => {
            if values.rows() != logits.rows() || values.cols() != logits.cols() {
                return Err(Error::invalid("value target shape mismatch"));
            }
            let mut delta = DenseMatrix::zeros(logits.rows(), logits.cols());
            let mut loss = 0.0;
            for s in 0..logits.rows() {
                for c in 0..logits.cols() {
                    let r = logits.get(s, c) - values.get(s, c);
                    loss += r * r;
                    delta.set(s, c, r / batch);
                }
            }
            (loss / (2.0 * batch), delta)
        }
        _ => {
            return Err(Error::invalid(
                "loss kind does not match target type (labels vs values)",
            ))
        }
    };

    // Backward pass.
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(model.layers.len());
    for li in (0..model.layers.len()).rev() {
        let prev = &acts[li];
        // dW = delta^T a_prev, db = column sums of delta.
        let d_weight = delta.transpose().matmul(prev)?;
        let mut d_bias = vec![0.0; delta.cols()];
        for s in 0..delta.rows() {
            for (c, b) in d_bias.iter_mut().enumerate() {
                *b += delta.get(s, c);
            }
        }
        grads.push(LayerGrads { d_weight, d_bias });

        if li > 0 {
            let w = model.layers[li].effective_weight();
            // delta_prev = (delta W) * act'(a_prev)
            let mut prev_delta = delta.matmul(&w)?;
            for s in 0..prev_delta.rows() {
                for c in 0..prev_delta.cols() {
                    let deriv = model.activation.derivative_from_output(prev.get(s, c));
                    prev_delta.set(s, c, prev_delta.get(s, c) * deriv);
                }
            }
            delta = prev_delta;
        }
    }
    grads.reverse();
    Ok((loss, grads))
}

/// Routes dense layer gradients into the flat trainable-parameter vector.
/// Gradient mass at frozen coordinates is discarded.
pub fn route_grads(model: &MlpModel, layer_grads: &[LayerGrads]) -> Result<Vec<f64>> {
    if layer_grads.len() != model.layers.len() {
        return Err(Error::invalid("gradient count does not match layers"));
    }
    let mut out = Vec::with_capacity(model.trainable_len());
    for (layer, g) in model.layers.iter().zip(layer_grads) {
        match &layer.train {
            LayerTrain::Base => {
                out.extend_from_slice(g.d_weight.as_slice());
                out.extend_from_slice(&g.d_bias);
            }
            LayerTrain::Frozen => {}
            LayerTrain::Full(_) => out.extend_from_slice(g.d_weight.as_slice()),
            LayerTrain::Masked(upd) => {
                out.extend(scatter_grad(&g.d_weight, upd.mask())?);
            }
            LayerTrain::Lora(l) => {
                let s = l.scaling();
                // d down = s * up^T dW ; d up = s * dW down^T
                let d_down = l.up.transpose().matmul(&g.d_weight)?.scaled(s);
                let d_up = g.d_weight.matmul(&l.down.transpose())?.scaled(s);
                out.extend_from_slice(d_down.as_slice());
                out.extend_from_slice(d_up.as_slice());
            }
        }
    }
    Ok(out)
}

/// Full-batch loss gradient as a flat vector over the trainable parameters.
pub fn trainable_grad(
    model: &MlpModel,
    inputs: &DenseMatrix,
    targets: &Targets,
    kind: LossKind,
) -> Result<Vec<f64>> {
    let (_, grads) = loss_and_layer_grads(model, inputs, targets, kind)?;
    route_grads(model, &grads)
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl OptimizerState {
    fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    fn step(&mut self, kind: &OptimizerKind, lr: f64, params: &mut [f64], grads: &[f64]) {
        match *kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::AdamW {
                beta1,
                beta2,
                epsilon,
                weight_decay,
            } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grads[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grads[i] * grads[i];
                    let mh = self.m[i] / bc1;
                    let vh = self.v[i] / bc2;
                    params[i] -= lr * mh / (vh.sqrt() + epsilon) + lr * weight_decay * params[i];
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    /// Accuracy in percent; None for value targets.
    pub accuracy: Option<f64>,
}

pub fn evaluate(model: &MlpModel, data: &Dataset, kind: LossKind) -> Result<EvalMetrics> {
    let (loss, _) = loss_and_layer_grads(model, &data.inputs, &data.targets, kind)?;
    let accuracy = match &data.targets {
        Targets::Labels(labels) => {
            let logits = model.logits(&data.inputs)?;
            let mut correct = 0usize;
            for (s, &y) in labels.iter().enumerate() {
                let row = logits.row(s);
                // NaN-safe argmax: a diverged model may emit non-finite logits.
                let mut pred = 0usize;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[pred] {
                        pred = i;
                    }
                }
                if pred == y {
                    correct += 1;
                }
            }
            Some(100.0 * correct as f64 / labels.len() as f64)
        }
        Targets::Values(_) => None,
    };
    Ok(EvalMetrics { loss, accuracy })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitMetrics {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_train_loss: f64,
    pub diverged: bool,
    /// L2 norm over the trainable parameters' movement from initialization.
    pub distance_from_init: f64,
    pub steps: usize,
    pub epochs_run: usize,
}

/// Trains a dataset pair in place with mini-batch updates. Only the model's
/// trainable parameterization moves; frozen base weights are untouched.
pub fn fit(
    model: &mut MlpModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<FitMetrics> {
    if cfg.learning_rate <= 0.0 {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let theta0 = model.trainable_vector();
    let dim = theta0.len();

    let initial = evaluate(model, train, cfg.loss_kind)?;
    if !initial.loss.is_finite() {
        return Err(Error::NonFinite("loss at step 0".into()));
    }
    let cap = cfg
        .divergence_cap
        .unwrap_or(1e6 * initial.loss.max(f64::MIN_POSITIVE));

    let mut diverged = false;
    let mut steps = 0usize;
    let mut epochs_run = 0usize;
    let mut last_loss = initial.loss;

    if dim > 0 {
        let mut params = theta0.clone();
        let mut opt = OptimizerState::new(dim);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut reached_target = cfg.loss_target.is_some_and(|t| initial.loss <= t);

        'epochs: for _ in 0..cfg.epochs {
            if reached_target {
                break;
            }
            epochs_run += 1;
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let (bx, bt) = gather(train, chunk);
                let (loss, grads) = loss_and_layer_grads(model, &bx, &bt, cfg.loss_kind)?;
                if !loss.is_finite() || loss > cap {
                    last_loss = loss;
                    diverged = true;
                    break 'epochs;
                }
                let flat = route_grads(model, &grads)?;
                opt.step(&cfg.optimizer, cfg.learning_rate, &mut params, &flat);
                model.set_trainable_vector(&params)?;
                steps += 1;
                if cfg.loss_target.is_some() {
                    let full = evaluate(model, train, cfg.loss_kind)?;
                    last_loss = full.loss;
                    if !full.loss.is_finite() || full.loss > cap {
                        diverged = true;
                        break 'epochs;
                    }
                    if full.loss <= cfg.loss_target.unwrap() {
                        reached_target = true;
                        break;
                    }
                }
            }
        }
    }

    let train_eval = evaluate(model, train, cfg.loss_kind)?;
    if train_eval.loss.is_finite() {
        last_loss = train_eval.loss;
        if last_loss > cap {
            diverged = true;
        }
    } else {
        diverged = true;
    }
    let test_eval = evaluate(model, test, cfg.loss_kind)?;
    let theta_end = model.trainable_vector();

    Ok(FitMetrics {
        train_accuracy: train_eval.accuracy.unwrap_or(f64::NAN),
        test_accuracy: test_eval.accuracy.unwrap_or(f64::NAN),
        final_train_loss: last_loss,
        diverged,
        distance_from_init: dist2(&theta_end, &theta0),
        steps,
        epochs_run,
    })
}

fn gather(data: &Dataset, idx: &[usize]) -> (DenseMatrix, Targets) {
    let cols = data.inputs.cols();
    let mut x = DenseMatrix::zeros(idx.len(), cols);
    for (r, &s) in idx.iter().enumerate() {
        let src = data.inputs.row(s);
        for c in 0..cols {
            x.set(r, c, src[c]);
        }
    }
    let t = match &data.targets {
        Targets::Labels(l) => Targets::Labels(idx.iter().map(|&s| l[s]).collect()),
        Targets::Values(v) => {
            let mut out = DenseMatrix::zeros(idx.len(), v.cols());
            for (r, &s) in idx.iter().enumerate() {
                for c in 0..v.cols() {
                    out.set(r, c, v.get(s, c));
                }
            }
            Targets::Values(out)
        }
    };
    (x, t)
}

/// Fine-tunes the model on the target task's train split and reports train
/// and test metrics. Zero trainable parameters is allowed and returns the
/// frozen model's evaluation with zero distance.
pub fn finetune(
    model: &mut MlpModel,
    task: &SyntheticTask,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<FitMetrics> {
    let train = task.train_set();
    let test = task.test_set();
    fit(model, &train, &test, cfg, rng)
}

#[derive(Clone, Debug)]
pub struct PretrainResult {
    pub model: MlpModel,
    pub train_accuracy: f64,
    pub epochs_run: usize,
    /// Whether the 95% train-accuracy target was reached before the cap.
    pub reached_target: bool,
}

/// Accuracy at which pretraining stops early.
pub const PRETRAIN_TARGET_ACCURACY: f64 = 95.0;
/// Accuracy below which pretraining is considered failed (degenerate task
/// or architecture).
pub const PRETRAIN_FLOOR_ACCURACY: f64 = 60.0;

/// Trains a fresh fully-trainable MLP on the base task until train accuracy
/// reaches 95% or the epoch cap. With `cfg.epochs == 0` the initialized
/// model is returned untrained (`reached_target = false`).
pub fn pretrain(
    task: &SyntheticTask,
    hidden: &[usize],
    activation: crate::nn::model::Activation,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<PretrainResult> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(task.input_dim);
    dims.extend_from_slice(hidden);
    dims.push(task.classes);
    let mut init_rng = rng.substream(0);
    let mut model = MlpModel::new(&dims, activation, &mut init_rng)?;

    let train = task.train_set();
    let test = task.test_set();
    let mut train_rng = rng.substream(1);
    let mut epochs_run = 0usize;
    let mut accuracy = evaluate(&model, &train, cfg.loss_kind)?
        .accuracy
        .unwrap_or(0.0);
    let mut reached = accuracy >= PRETRAIN_TARGET_ACCURACY;

    let per_epoch = TrainConfig {
        epochs: 1,
        ..cfg.clone()
    };
    while epochs_run < cfg.epochs && !reached {
        let m = fit(&mut model, &train, &test, &per_epoch, &mut train_rng)?;
        epochs_run += 1;
        accuracy = m.train_accuracy;
        reached = accuracy >= PRETRAIN_TARGET_ACCURACY;
        if m.diverged {
            break;
        }
    }

    if cfg.epochs > 0 && accuracy < PRETRAIN_FLOOR_ACCURACY {
        return Err(Error::PretrainingFailed { accuracy });
    }
    Ok(PretrainResult {
        model,
        train_accuracy: accuracy,
        epochs_run,
        reached_target: reached,
    })
}
