//! The `sweep` subcommand: pretrain the standard checkpoint, run the
//! (ratio x learning rate x seed) grid, and emit the records CSV plus the
//! trend report.

use serde::Serialize;

use masklab::sweep::{records_csv, run_sweep, trend_report, SweepGrid, TrendReport};
use masklab::nn::TrainConfig;

use crate::commands::common::{
    build_pretrained, build_task_pair, write_file, write_json, write_provenance, CmdError,
    RunOptions,
};
use crate::config::SweepCmdConfig;
use crate::manifest::ExperimentManifest;

#[derive(Serialize)]
struct SweepOutput<'a> {
    manifest: &'a ExperimentManifest,
    cells: usize,
    diverged_cells: usize,
    trend: TrendReport,
}

pub fn run(opts: &RunOptions) -> Result<bool, CmdError> {
    let mut cfg: SweepCmdConfig = super::common::load_config(&opts.config_path)?;
    if let Some(seed) = opts.seed_override {
        cfg.master_seed = seed;
    }
    let manifest = ExperimentManifest::new("sweep", &cfg, cfg.master_seed, opts.timings);

    let pair = build_task_pair(&cfg.task, cfg.master_seed)?;
    let pretrained = build_pretrained(&cfg.pretrain, &pair, cfg.master_seed)?;

    let train = TrainConfig::new(
        cfg.finetune.optimizer,
        1.0, // overwritten per cell
        cfg.finetune.epochs,
        cfg.finetune.batch_size,
    )?;
    let grid = SweepGrid {
        ratios: cfg.ratios.clone(),
        learning_rates: cfg.learning_rates.clone(),
        seeds: cfg.seeds,
        method: cfg.method,
        train,
        base_seed: cfg.master_seed,
        measure_hessian: cfg.measure_hessian,
        lora_alpha: cfg.lora_alpha,
    };
    let records = run_sweep(&grid, &pair, &pretrained)?;
    let trend = trend_report(&records)?;

    let csv = records_csv(&records, &manifest.csv_comments(), opts.timings);
    write_file(&opts.out_dir, "records.csv", &csv)?;

    let output = SweepOutput {
        manifest: &manifest,
        cells: records.len(),
        diverged_cells: records.iter().filter(|r| r.diverged).count(),
        trend,
    };
    write_json(&opts.out_dir, "trend.json", &output)?;
    write_provenance(&opts.out_dir, &manifest, &cfg, &["records.csv", "trend.json"])?;
    Ok(true)
}
