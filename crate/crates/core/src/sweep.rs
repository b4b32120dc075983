//! Grid-search orchestration over (trainable ratio x learning rate x seed)
//! with deterministic per-cell seeding. Cells run independently over clones
//! of one pretrained checkpoint; a failure in one cell is recorded and never
//! aborts the sweep. Masks are keyed by (base seed, seed index, layer), not
//! by ratio or learning rate, so one seed sweeps the same (nested) masks
//! across the whole grid.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskMode;
use crate::nn::hessian::hessian_spectral_norm;
use crate::nn::model::{attach_peft, LayerSpec, MlpModel};
use crate::nn::probes::{mask_stream, TaskPair};
use crate::nn::train::{finetune, TrainConfig};
use crate::report::{csv_document, fmt_f64};
use crate::tensor::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RandomMask,
    StructuredMask,
    Lora,
    FullFt,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Trainable-parameter ratios, descending, in (0, 1].
    pub ratios: Vec<f64>,
    pub learning_rates: Vec<f64>,
    /// Number of seeds per cell.
    pub seeds: u64,
    pub method: Method,
    pub train: TrainConfig,
    pub base_seed: u64,
    /// Estimate the post-training Hessian norm per cell.
    pub measure_hessian: bool,
    /// LoRA alpha used when method = lora.
    pub lora_alpha: f64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() || self.learning_rates.is_empty() || self.seeds == 0 {
            return Err(Error::invalid("sweep grid must be non-empty"));
        }
        if self.ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::invalid("ratios must lie in (0, 1]"));
        }
        if self.ratios.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("ratios must be strictly descending"));
        }
        if self.learning_rates.iter().any(|&lr| lr <= 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    pub ratio: f64,
    pub lr: f64,
    pub seed: u64,
    pub test_accuracy: f64,
    pub final_train_loss: f64,
    pub diverged: bool,
    pub distance_from_init: f64,
    pub hessian_norm: f64,
    /// Wall-clock seconds; excluded from deterministic outputs.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// LoRA rank whose parameter count best matches `ratio` of a layer's numel.
fn lora_rank_for_ratio(out_dim: usize, in_dim: usize, ratio: f64) -> usize {
    let params = ratio * (out_dim * in_dim) as f64;
    let rank = (params / (out_dim + in_dim) as f64).round() as usize;
    rank.clamp(1, out_dim.min(in_dim))
}

fn specs_for(method: Method, ratio: f64, model: &MlpModel, lora_alpha: f64) -> Vec<LayerSpec> {
    let n = model.layers.len();
    (0..n)
        .map(|i| {
            if i + 1 == n {
                return LayerSpec::Frozen;
            }
            match method {
                Method::RandomMask => LayerSpec::Masked {
                    p: ratio,
                    mode: MaskMode::ExactCount,
                },
                Method::StructuredMask => LayerSpec::Masked {
                    p: ratio,
                    mode: MaskMode::StructuredColumns,
                },
                Method::Lora => {
                    let layer = &model.layers[i];
                    LayerSpec::Lora {
                        rank: lora_rank_for_ratio(layer.out_dim(), layer.in_dim(), ratio),
                        alpha: lora_alpha,
                    }
                }
                Method::FullFt => LayerSpec::Full,
            }
        })
        .collect()
}

fn run_cell(
    grid: &SweepGrid,
    pair: &TaskPair,
    pretrained: &MlpModel,
    ratio: f64,
    lr: f64,
    seed: u64,
    cell_id: u64,
) -> SweepRecord {
    let start = std::time::Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<(f64, f64, bool, f64, f64)> {
        let specs = specs_for(grid.method, ratio, pretrained, grid.lora_alpha);
        let mut attach_rng = mask_stream(grid.base_seed, seed);
        let mut model = attach_peft(pretrained, &specs, &mut attach_rng)?;

        let mut cfg = grid.train.clone();
        cfg.learning_rate = lr;
        let mut train_rng = RngStream::new(grid.base_seed, 0x5EE9).substream(cell_id);
        let metrics = finetune(&mut model, &pair.target, &cfg, &mut train_rng)?;

        let hessian = if grid.measure_hessian && !metrics.diverged {
            let mut probe_rng = RngStream::new(grid.base_seed, 0x4E55).substream(cell_id);
            hessian_spectral_norm(&mut model, &pair.target, 100, 1e-6, &mut probe_rng)?.value
        } else {
            f64::NAN
        };
        Ok((
            metrics.test_accuracy,
            metrics.final_train_loss,
            metrics.diverged,
            metrics.distance_from_init,
            hessian,
        ))
    }));

    let (test_accuracy, final_train_loss, diverged, distance, hessian) = match outcome {
        Ok(Ok(v)) => v,
        // Errors and panics are recorded as diverged cells, never fatal.
        Ok(Err(_)) | Err(_) => (f64::NAN, f64::NAN, true, f64::NAN, f64::NAN),
    };
    SweepRecord {
        ratio,
        lr,
        seed,
        test_accuracy,
        final_train_loss,
        diverged,
        distance_from_init: distance,
        hessian_norm: hessian,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Executes every (ratio, lr, seed) cell against clones of the pretrained
/// checkpoint. Records come back in grid order regardless of worker count.
pub fn run_sweep(
    grid: &SweepGrid,
    pair: &TaskPair,
    pretrained: &MlpModel,
) -> Result<Vec<SweepRecord>> {
    grid.validate()?;
    let mut cells = Vec::new();
    for (ri, &ratio) in grid.ratios.iter().enumerate() {
        for (li, &lr) in grid.learning_rates.iter().enumerate() {
            for seed in 0..grid.seeds {
                // Stable cell id from grid coordinates.
                let cell_id = ((ri as u64) << 40) | ((li as u64) << 20) | seed;
                cells.push((ratio, lr, seed, cell_id));
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|&(ratio, lr, seed, cell_id)| {
            run_cell(grid, pair, pretrained, ratio, lr, seed, cell_id)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub lr: f64,
    pub mean_accuracy: f64,
}

/// Best learning rate at a ratio by mean test accuracy over non-diverged
/// seeds; ties break toward the smaller rate.
pub fn best_cell(records: &[SweepRecord], ratio: f64) -> Result<BestCell> {
    let mut by_lr: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in records.iter().filter(|r| r.ratio == ratio && !r.diverged) {
        match by_lr.iter_mut().find(|(lr, _)| *lr == r.lr) {
            Some((_, accs)) => accs.push(r.test_accuracy),
            None => by_lr.push((r.lr, vec![r.test_accuracy])),
        }
    }
    if by_lr.is_empty() {
        return Err(Error::NoValidCell { ratio });
    }
    by_lr.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut best: Option<BestCell> = None;
    for (lr, accs) in by_lr {
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let better = match &best {
            None => true,
            Some(b) => mean > b.mean_accuracy,
        };
        if better {
            best = Some(BestCell {
                lr,
                mean_accuracy: mean,
            });
        }
    }
    Ok(best.expect("non-empty"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrTrendVerdict {
    /// lr* strictly increases as the ratio decreases.
    Monotone,
    /// lr* never decreases as the ratio decreases.
    MonotoneNonStrict,
    NonMonotone,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendRow {
    pub ratio: f64,
    pub best_lr: Option<f64>,
    pub mean_accuracy: Option<f64>,
    pub mean_distance: Option<f64>,
    pub mean_hessian_norm: Option<f64>,
    /// Smallest learning rate at which any seed diverged.
    pub divergence_frontier: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrontierViolation {
    pub ratio: f64,
    pub seed: u64,
    pub diverged_lr: f64,
    pub larger_converged_lr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendReport {
    pub rows: Vec<TrendRow>,
    pub lr_trend: LrTrendVerdict,
    /// Cells where a larger learning rate converged although a smaller one
    /// diverged (same ratio and seed). Reported, not asserted: loss
    /// landscapes need not be monotone in the learning rate.
    pub frontier_violations: Vec<FrontierViolation>,
}

/// Per-ratio aggregation and the monotonicity verdict for lr* vs ratio.
/// Requires records from at least two ratios.
pub fn trend_report(records: &[SweepRecord]) -> Result<TrendReport> {
    let mut ratios: Vec<f64> = Vec::new();
    for r in records {
        if !ratios.contains(&r.ratio) {
            ratios.push(r.ratio);
        }
    }
    if ratios.len() < 2 {
        return Err(Error::precondition(format!(
            "trend report needs records from >= 2 ratios, got {}",
            ratios.len()
        )));
    }
    ratios.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in &ratios {
        let best = best_cell(records, ratio).ok();
        let (mean_distance, mean_hessian_norm) = match &best {
            Some(b) => {
                let at_best: Vec<&SweepRecord> = records
                    .iter()
                    .filter(|r| r.ratio == ratio && r.lr == b.lr && !r.diverged)
                    .collect();
                let mean = |vals: Vec<f64>| -> Option<f64> {
                    let vals: Vec<f64> = vals.into_iter().filter(|v| v.is_finite()).collect();
                    if vals.is_empty() {
                        None
                    } else {
                        Some(vals.iter().sum::<f64>() / vals.len() as f64)
                    }
                };
                (
                    mean(at_best.iter().map(|r| r.distance_from_init).collect()),
                    mean(at_best.iter().map(|r| r.hessian_norm).collect()),
                )
            }
            None => (None, None),
        };
        let divergence_frontier = records
            .iter()
            .filter(|r| r.ratio == ratio && r.diverged)
            .map(|r| r.lr)
            .fold(None, |acc: Option<f64>, lr| {
                Some(acc.map_or(lr, |a: f64| a.min(lr)))
            });
        rows.push(TrendRow {
            ratio,
            best_lr: best.as_ref().map(|b| b.lr),
            mean_accuracy: best.as_ref().map(|b| b.mean_accuracy),
            mean_distance,
            mean_hessian_norm,
            divergence_frontier,
        });
    }

    // lr* monotonicity as the ratio decreases through the rows.
    let lrs: Vec<f64> = rows.iter().filter_map(|r| r.best_lr).collect();
    let non_decreasing = lrs.windows(2).all(|w| w[1] >= w[0]);
    let strict = lrs.windows(2).all(|w| w[1] > w[0]);
    let lr_trend = if lrs.len() < 2 || !non_decreasing {
        LrTrendVerdict::NonMonotone
    } else if strict {
        LrTrendVerdict::Monotone
    } else {
        LrTrendVerdict::MonotoneNonStrict
    };

    let mut frontier_violations = Vec::new();
    for &ratio in &ratios {
        let seeds: std::collections::BTreeSet<u64> = records
            .iter()
            .filter(|r| r.ratio == ratio)
            .map(|r| r.seed)
            .collect();
        for seed in seeds {
            let mine: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.ratio == ratio && r.seed == seed)
                .collect();
            for d in mine.iter().filter(|r| r.diverged) {
                if let Some(ok) = mine
                    .iter()
                    .filter(|r| !r.diverged && r.lr > d.lr)
                    .min_by(|a, b| a.lr.partial_cmp(&b.lr).unwrap())
                {
                    frontier_violations.push(FrontierViolation {
                        ratio,
                        seed,
                        diverged_lr: d.lr,
                        larger_converged_lr: ok.lr,
                    });
                }
            }
        }
    }

    Ok(TrendReport {
        rows,
        lr_trend,
        frontier_violations,
    })
}

/// Deterministic records CSV. Wall-clock timings are only included when
/// requested, since they vary run to run.
pub fn records_csv(records: &[SweepRecord], comments: &[String], include_timings: bool) -> String {
    let mut header = vec![
        "ratio",
        "lr",
        "seed",
        "acc",
        "loss",
        "diverged",
        "distance",
        "hessian_norm",
    ];
    if include_timings {
        header.push("seconds");
    }
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![
                fmt_f64(r.ratio),
                fmt_f64(r.lr),
                r.seed.to_string(),
                fmt_f64(r.test_accuracy),
                fmt_f64(r.final_train_loss),
                (r.diverged as u8).to_string(),
                fmt_f64(r.distance_from_init),
                fmt_f64(r.hessian_norm),
            ];
            if include_timings {
                row.push(fmt_f64(r.wall_seconds));
            }
            row
        })
        .collect();
    csv_document(comments, &header, &rows)
}
