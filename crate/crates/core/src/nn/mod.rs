//! Desk-scale fine-tuning sandbox: a hand-backpropagated MLP whose layers
//! can be frozen, fully trainable, masked to a sparse coordinate list, or
//! extended with a low-rank adapter, plus curvature and distance probes.

pub mod hessian;
pub mod model;
pub mod probes;
pub mod task;
pub mod train;

pub use hessian::{hessian_spectral_norm, hessian_spectral_norm_on};
pub use model::{attach_peft, Activation, Layer, LayerSpec, LayerTrain, LoraAdapter, MlpModel};
pub use probes::{
    attach_masked_hidden, distance_at_matched_loss_trend, hessian_at_init_trend,
    hidden_layer_specs, longer_training_probe, median, standard_finetune_config,
    standard_hidden, standard_pretrain_config, standard_pretrained, standard_task_pair,
    LongerTrainingPoint, TaskPair, TrendSeries,
};
pub use task::{Dataset, SyntheticTask, Targets};
pub use train::{
    evaluate, finetune, fit, pretrain, trainable_grad, EvalMetrics, FitMetrics, LossKind,
    OptimizerKind, PretrainResult, TrainConfig,
};
