//! JSON configuration schemas for the subcommands. Unknown keys are errors:
//! a silently ignored misspelling would poison a whole sweep. Every field
//! has a default, so a config file only needs the keys it overrides.

use serde::{Deserialize, Serialize};

use masklab::concentration::BoundVariant;
use masklab::nn::OptimizerKind;
use masklab::sweep::Method;

fn default_master_seed() -> u64 {
    42
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub master_seed: u64,
    pub closed_form: ClosedFormSection,
    pub dichotomy: DichotomySection,
    pub norm_bound: NormBoundSection,
    /// Dump per-step loss CSVs for the first few instances.
    pub dump_trajectories: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            master_seed: default_master_seed(),
            closed_form: ClosedFormSection::default(),
            dichotomy: DichotomySection::default(),
            norm_bound: NormBoundSection::default(),
            dump_trajectories: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosedFormSection {
    pub instances: usize,
    pub checkpoints: Vec<usize>,
    pub tolerance: f64,
}

impl Default for ClosedFormSection {
    fn default() -> Self {
        Self {
            instances: 50,
            checkpoints: vec![1, 10, 100],
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DichotomySection {
    pub instances: usize,
    pub safe_factor: f64,
    pub unsafe_factor: f64,
    pub convergence_steps: usize,
    pub divergence_steps: usize,
    pub loss_tolerance: f64,
}

impl Default for DichotomySection {
    fn default() -> Self {
        Self {
            instances: 20,
            safe_factor: 0.99,
            unsafe_factor: 1.01,
            convergence_steps: 100_000,
            divergence_steps: 1000,
            loss_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormBoundSection {
    pub instances: usize,
    pub trials: usize,
    pub sigma: f64,
}

impl Default for NormBoundSection {
    fn default() -> Self {
        Self {
            instances: 10,
            trials: 10_000,
            sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcentrationCmdConfig {
    pub master_seed: u64,
    pub n: usize,
    pub d: usize,
    /// Mask densities checked by the deviation suite.
    pub ps: Vec<f64>,
    pub trials: usize,
    pub delta: f64,
    pub bound_variant: BoundVariant,
    pub trace: TraceSection,
    pub tail: TailSection,
}

impl Default for ConcentrationCmdConfig {
    fn default() -> Self {
        Self {
            master_seed: default_master_seed(),
            n: 4,
            d: 400,
            ps: vec![0.3],
            trials: 500,
            delta: 0.05,
            bound_variant: BoundVariant::ProofConsistent,
            trace: TraceSection::default(),
            tail: TailSection::default(),
        }
    }
}

impl ConcentrationCmdConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("delta = {} outside (0, 1)", self.delta));
        }
        if self.ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("every p must lie in [0, 1]".to_string());
        }
        if self.trials == 0 || self.n == 0 || self.d == 0 {
            return Err("n, d and trials must be positive".to_string());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub trials: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            n: 4,
            d: 200,
            p: 0.2,
            trials: 2000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailSection {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub trials: usize,
}

impl Default for TailSection {
    fn default() -> Self {
        Self {
            n: 3,
            d: 100,
            p: 0.5,
            trials: 20_000,
        }
    }
}

/// The standard pretrain/target task pair at desk scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub input_dim: usize,
    pub classes: usize,
    pub mean_radius: f64,
    pub noise_sigma: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub target_shift: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            input_dim: 16,
            classes: 4,
            mean_radius: 2.5,
            noise_sigma: 0.6,
            train_size: 512,
            test_size: 256,
            target_shift: 2.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            learning_rate: 1e-3,
            epochs: 40,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::adamw_default(),
            epochs: 30,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepCmdConfig {
    pub master_seed: u64,
    pub task: TaskSection,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    /// Trainable-parameter ratios, descending.
    pub ratios: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub seeds: u64,
    pub method: Method,
    pub measure_hessian: bool,
    pub lora_alpha: f64,
}

impl Default for SweepCmdConfig {
    fn default() -> Self {
        Self {
            master_seed: default_master_seed(),
            task: TaskSection::default(),
            pretrain: PretrainSection::default(),
            finetune: FinetuneSection::default(),
            ratios: vec![1.0, 0.1, 0.01, 0.001],
            learning_rates: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0],
            seeds: 5,
            method: Method::RandomMask,
            measure_hessian: true,
            lora_alpha: 16.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeCmdConfig {
    pub master_seed: u64,
    pub task: TaskSection,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    /// Densities probed, descending.
    pub densities: Vec<f64>,
    /// Fine-tuning rate per density for the distance and after-training
    /// Hessian probes (same length as `densities`).
    pub density_learning_rates: Vec<f64>,
    pub seeds: u64,
    pub hessian_iters: usize,
    pub hessian_tol: f64,
    pub longer_training: LongerTrainingSection,
    pub quadratic_check: QuadraticCheckSection,
}

impl Default for ProbeCmdConfig {
    fn default() -> Self {
        Self {
            master_seed: default_master_seed(),
            task: TaskSection::default(),
            pretrain: PretrainSection::default(),
            finetune: FinetuneSection::default(),
            densities: vec![1.0, 0.1, 0.01],
            density_learning_rates: vec![1e-4, 1e-3, 1e-2],
            seeds: 5,
            hessian_iters: 100,
            hessian_tol: 1e-6,
            longer_training: LongerTrainingSection::default(),
            quadratic_check: QuadraticCheckSection::default(),
        }
    }
}

/// Longer-training compensation probe: the sparsest density trained at a
/// fraction of its best rate over an ascending epoch grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongerTrainingSection {
    pub lr_fraction: f64,
    pub epoch_grid: Vec<usize>,
}

impl Default for LongerTrainingSection {
    fn default() -> Self {
        Self {
            lr_fraction: 0.1,
            epoch_grid: vec![1, 2, 4, 8, 16],
        }
    }
}

/// Sanity oracle for the Hessian probe: a least-squares head whose exact
/// curvature is lambda_1(X^T X) / n.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticCheckSection {
    pub samples: usize,
    pub dim: usize,
    pub rel_tolerance: f64,
}

impl Default for QuadraticCheckSection {
    fn default() -> Self {
        Self {
            samples: 24,
            dim: 6,
            rel_tolerance: 1e-4,
        }
    }
}
