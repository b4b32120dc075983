//! Fine-tuning diagnostics: the standard pretrain/target task pair, mask
//! attachment over hidden layers, the longer-training curve, and the
//! Hessian-norm and distance trends across mask densities.
//!
//! Trend probes hold the random keys fixed while the density varies, so the
//! masks are nested across densities (see `masking`) and the comparison
//! isolates the effect of the trainable-parameter count. Summary statistics
//! are medians over seeds because single-seed curvature estimates are noisy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskMode;
use crate::nn::hessian::hessian_spectral_norm;
use crate::nn::model::{attach_peft, Activation, LayerSpec, MlpModel};
use crate::nn::task::SyntheticTask;
use crate::nn::train::{evaluate, finetune, pretrain, FitMetrics, OptimizerKind, TrainConfig};
use crate::tensor::RngStream;

/// Pretraining task plus the shifted downstream task.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskPair {
    pub base: SyntheticTask,
    pub target: SyntheticTask,
}

/// The default desk-scale setup: a 4-class Gaussian mixture in 16 dimensions
/// and a target task whose class means are shifted far enough that the
/// pretrained model needs real adaptation.
pub fn standard_task_pair(seed: u64) -> Result<TaskPair> {
    let base = SyntheticTask::gaussian_mixture(16, 4, 2.5, 0.6, 512, 256, seed)?;
    let target = base.shifted_variant(2.5, seed.wrapping_add(1));
    Ok(TaskPair { base, target })
}

pub fn standard_hidden() -> Vec<usize> {
    vec![128, 128]
}

pub fn standard_pretrain_config() -> TrainConfig {
    TrainConfig::new(OptimizerKind::adamw_default(), 1e-3, 40, 32).expect("static config")
}

pub fn standard_finetune_config(learning_rate: f64) -> Result<TrainConfig> {
    TrainConfig::new(OptimizerKind::adamw_default(), learning_rate, 30, 32)
}

/// Pretrains the standard architecture on the pair's base task.
pub fn standard_pretrained(pair: &TaskPair, seed: u64) -> Result<MlpModel> {
    let mut rng = RngStream::new(seed, 0xBA5E);
    let res = pretrain(
        &pair.base,
        &standard_hidden(),
        Activation::Relu,
        &standard_pretrain_config(),
        &mut rng,
    )?;
    Ok(res.model)
}

/// Layer specs that adapt every hidden layer and freeze the output head,
/// mirroring a setup where only selected target modules are tuned and the
/// classification head stays fixed.
pub fn hidden_layer_specs(model: &MlpModel, spec: LayerSpec) -> Vec<LayerSpec> {
    let n = model.layers.len();
    (0..n)
        .map(|i| if i + 1 == n { LayerSpec::Frozen } else { spec })
        .collect()
}

/// Attaches masked increments (density p) to the hidden layers.
pub fn attach_masked_hidden(
    model: &MlpModel,
    p: f64,
    mode: MaskMode,
    rng: &mut RngStream,
) -> Result<MlpModel> {
    let specs = hidden_layer_specs(model, LayerSpec::Masked { p, mode });
    attach_peft(model, &specs, rng)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LongerTrainingPoint {
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_train_loss: f64,
}

/// Trains independent copies of the model for each epoch budget, restarting
/// from the same initialization with the same data order, and returns the
/// accuracy-vs-epochs curve.
pub fn longer_training_probe(
    model: &MlpModel,
    task: &SyntheticTask,
    small_lr: f64,
    epoch_grid: &[usize],
    template: &TrainConfig,
    train_seed: u64,
) -> Result<Vec<LongerTrainingPoint>> {
    if epoch_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("epoch grid must be ascending"));
    }
    let mut curve = Vec::with_capacity(epoch_grid.len());
    for &epochs in epoch_grid {
        let mut cfg = template.clone();
        cfg.learning_rate = small_lr;
        cfg.epochs = epochs;
        let mut m = model.clone();
        let metrics = if epochs == 0 {
            let train = evaluate(&m, &task.train_set(), cfg.loss_kind)?;
            let test = evaluate(&m, &task.test_set(), cfg.loss_kind)?;
            LongerTrainingPoint {
                epochs,
                train_accuracy: train.accuracy.unwrap_or(f64::NAN),
                test_accuracy: test.accuracy.unwrap_or(f64::NAN),
                final_train_loss: train.loss,
            }
        } else {
            let mut rng = RngStream::new(train_seed, 0x10E6);
            let fm: FitMetrics = finetune(&mut m, task, &cfg, &mut rng)?;
            LongerTrainingPoint {
                epochs,
                train_accuracy: fm.train_accuracy,
                test_accuracy: fm.test_accuracy,
                final_train_loss: fm.final_train_loss,
            }
        };
        curve.push(metrics);
    }
    Ok(curve)
}

/// Median of a sample; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Per-density samples over seeds plus their medians, densities descending.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendSeries {
    pub densities: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
}

impl TrendSeries {
    pub fn medians_non_increasing(&self, rel_slack: f64) -> bool {
        self.medians
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + rel_slack) + f64::MIN_POSITIVE)
    }

    pub fn medians_non_decreasing(&self, rel_slack: f64) -> bool {
        self.medians
            .windows(2)
            .all(|w| w[1] * (1.0 + rel_slack) + f64::MIN_POSITIVE >= w[0])
    }
}

/// Mask stream for a given seed index; shared across densities so the masks
/// nest.
pub fn mask_stream(master_seed: u64, seed_index: u64) -> RngStream {
    RngStream::new(master_seed, 0xA5C0).substream(seed_index)
}

/// Hessian spectral norm at initialization (increments still zero) for each
/// density, over several seeds. With nested masks the trainable Hessian at a
/// sparser density is a principal submatrix of the denser one's, so each
/// seed's curve is non-increasing up to power-method error.
pub fn hessian_at_init_trend(
    pretrained: &MlpModel,
    task: &SyntheticTask,
    densities: &[f64],
    seeds: u64,
    master_seed: u64,
    iters: usize,
    tol: f64,
) -> Result<TrendSeries> {
    let mut samples = vec![Vec::with_capacity(seeds as usize); densities.len()];
    for s in 0..seeds {
        let stream = mask_stream(master_seed, s);
        for (di, &p) in densities.iter().enumerate() {
            let mut attached =
                attach_masked_hidden(pretrained, p, MaskMode::ExactCount, &mut stream.clone())?;
            let mut probe_rng = RngStream::new(master_seed, 0x4E55).substream(s);
            let est = hessian_spectral_norm(&mut attached, task, iters, tol, &mut probe_rng)?;
            samples[di].push(est.value);
        }
    }
    let medians = samples.iter().map(|v| median(v)).collect();
    Ok(TrendSeries {
        densities: densities.to_vec(),
        samples,
        medians,
    })
}

/// Distance from initialization at a matched train loss, per density over
/// seeds. For each seed the sparsest density trains first at its learning
/// rate for the full budget; the loss it reaches (padded by 2%) becomes the
/// stopping target for every denser configuration, so distances are compared
/// at the same achieved loss.
pub fn distance_at_matched_loss_trend(
    pretrained: &MlpModel,
    task: &SyntheticTask,
    densities: &[f64],
    per_density_lr: &[f64],
    template: &TrainConfig,
    seeds: u64,
    master_seed: u64,
) -> Result<TrendSeries> {
    if densities.len() != per_density_lr.len() {
        return Err(Error::invalid("need one learning rate per density"));
    }
    if densities.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("densities must be strictly descending"));
    }
    let sparsest = densities.len() - 1;
    let mut samples = vec![Vec::with_capacity(seeds as usize); densities.len()];
    for s in 0..seeds {
        let stream = mask_stream(master_seed, s);
        let train_rng = RngStream::new(master_seed, 0xD157).substream(s);

        let mut cfg = template.clone();
        cfg.learning_rate = per_density_lr[sparsest];
        let mut sparse_model = attach_masked_hidden(
            pretrained,
            densities[sparsest],
            MaskMode::ExactCount,
            &mut stream.clone(),
        )?;
        let sparse_metrics = finetune(&mut sparse_model, task, &cfg, &mut train_rng.clone())?;
        samples[sparsest].push(sparse_metrics.distance_from_init);
        let loss_target = sparse_metrics.final_train_loss * 1.02;

        for (di, &p) in densities.iter().enumerate().take(sparsest) {
            let mut cfg = template.clone();
            cfg.learning_rate = per_density_lr[di];
            cfg.loss_target = Some(loss_target);
            let mut model =
                attach_masked_hidden(pretrained, p, MaskMode::ExactCount, &mut stream.clone())?;
            let metrics = finetune(&mut model, task, &cfg, &mut train_rng.clone())?;
            samples[di].push(metrics.distance_from_init);
        }
    }
    let medians = samples.iter().map(|v| median(v)).collect();
    Ok(TrendSeries {
        densities: densities.to_vec(),
        samples,
        medians,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even_and_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn longer_training_probe_zero_grid_is_baseline_only() {
        let pair = standard_task_pair(71).unwrap();
        let mut rng = RngStream::new(72, 0);
        let model = MlpModel::new(&[16, 8, 4], Activation::Relu, &mut rng).unwrap();
        let cfg = standard_finetune_config(1e-3).unwrap();
        let curve = longer_training_probe(&model, &pair.target, 1e-3, &[0], &cfg, 7).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].epochs, 0);
    }

    #[test]
    fn longer_training_probe_rejects_descending_grid() {
        let pair = standard_task_pair(73).unwrap();
        let mut rng = RngStream::new(74, 0);
        let model = MlpModel::new(&[16, 8, 4], Activation::Relu, &mut rng).unwrap();
        let cfg = standard_finetune_config(1e-3).unwrap();
        assert!(
            longer_training_probe(&model, &pair.target, 1e-3, &[4, 2], &cfg, 7).is_err()
        );
    }

    #[test]
    fn trend_series_monotonicity_helpers() {
        let t = TrendSeries {
            densities: vec![1.0, 0.1],
            samples: vec![vec![2.0], vec![1.0]],
            medians: vec![2.0, 1.0],
        };
        assert!(t.medians_non_increasing(0.0));
        assert!(!t.medians_non_decreasing(0.0));
    }
}
