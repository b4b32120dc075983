//! End-to-end sweep invariants on a miniature grid: single-cell sweeps,
//! bit-identical reruns, and mask sharing across the learning-rate axis.

use masklab::nn::{OptimizerKind, SyntheticTask, TaskPair, TrainConfig};
use masklab::sweep::{records_csv, run_sweep, Method, SweepGrid};
use masklab::tensor::RngStream;

fn tiny_fixture() -> (TaskPair, masklab::nn::MlpModel) {
    let base = SyntheticTask::gaussian_mixture(8, 3, 2.5, 0.6, 96, 48, 700).unwrap();
    let target = base.shifted_variant(2.0, 701);
    let pair = TaskPair { base, target };
    let cfg = TrainConfig::new(OptimizerKind::adamw_default(), 1e-3, 15, 32).unwrap();
    let res = masklab::nn::pretrain(
        &pair.base,
        &[24],
        masklab::nn::Activation::Relu,
        &cfg,
        &mut RngStream::new(702, 0),
    )
    .unwrap();
    (pair, res.model)
}

fn tiny_grid(ratios: Vec<f64>, lrs: Vec<f64>, seeds: u64) -> SweepGrid {
    SweepGrid {
        ratios,
        learning_rates: lrs,
        seeds,
        method: Method::RandomMask,
        train: TrainConfig::new(OptimizerKind::adamw_default(), 1.0, 4, 32).unwrap(),
        base_seed: 7,
        measure_hessian: false,
        lora_alpha: 16.0,
    }
}

#[test]
fn single_cell_grid_yields_single_record() {
    let (pair, model) = tiny_fixture();
    let grid = tiny_grid(vec![0.1], vec![1e-2], 1);
    let records = run_sweep(&grid, &pair, &model).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].ratio, 0.1);
    assert_eq!(records[0].lr, 1e-2);
    assert!(!records[0].diverged);
}

#[test]
fn identical_grids_produce_byte_identical_csv() {
    let (pair, model) = tiny_fixture();
    let grid = tiny_grid(vec![1.0, 0.1], vec![1e-3, 1e-2], 2);
    let a = records_csv(&run_sweep(&grid, &pair, &model).unwrap(), &[], false);
    let b = records_csv(&run_sweep(&grid, &pair, &model).unwrap(), &[], false);
    assert_eq!(a, b);
}

#[test]
fn grid_validation_rejects_bad_shapes() {
    let grid = tiny_grid(vec![0.1, 1.0], vec![1e-3], 1); // ascending ratios
    assert!(grid.validate().is_err());
    let grid = tiny_grid(vec![1.0], vec![-1.0], 1);
    assert!(grid.validate().is_err());
    let grid = tiny_grid(vec![], vec![1e-3], 1);
    assert!(grid.validate().is_err());
}
