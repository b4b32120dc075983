//! The `probe` subcommand: Hessian spectral norms before and after
//! fine-tuning, distance from initialization at matched train loss, and the
//! longer-training compensation curve, each across mask densities. The
//! least-squares curvature oracle is the assertion-tier check; the trends
//! are reported with verdicts.

use serde::Serialize;

use masklab::masking::MaskMode;
use masklab::nn::{
    attach_masked_hidden, attach_peft, distance_at_matched_loss_trend, finetune,
    hessian_at_init_trend, hessian_spectral_norm, hessian_spectral_norm_on,
    longer_training_probe, median, standard_finetune_config, Dataset, LayerSpec,
    LongerTrainingPoint, LossKind, MlpModel, Targets, TrainConfig, TrendSeries,
};
use masklab::nn::probes::mask_stream;
use masklab::report::{csv_document, fmt_f64};
use masklab::tensor::{sym_eigen, DenseMatrix, RngStream, SYM_EIGEN_TOL};

use crate::commands::common::{
    all_passed, build_pretrained, build_task_pair, write_file, write_json, write_provenance,
    CheckResult, CmdError, RunOptions,
};
use crate::config::ProbeCmdConfig;
use crate::manifest::ExperimentManifest;

#[derive(Serialize)]
struct QuadraticCheck {
    estimate: f64,
    analytic: f64,
    rel_error: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct ProbeOutput<'a> {
    manifest: &'a ExperimentManifest,
    quadratic: QuadraticCheck,
    hessian_at_init: TrendSeries,
    hessian_after_training: TrendSeries,
    distance_at_matched_loss: TrendSeries,
    longer_training_median: Vec<LongerTrainingPoint>,
    checks: Vec<CheckResult>,
    all_passed: bool,
}

/// Power-method estimate on a least-squares head against the exact
/// curvature lambda_1(X^T X) / n.
fn quadratic_head_check(
    samples: usize,
    dim: usize,
    tol: f64,
    master_seed: u64,
) -> Result<QuadraticCheck, CmdError> {
    let mut rng = RngStream::new(master_seed, 0x9A);
    let mut data = vec![0.0; samples * dim];
    rng.fill_normal(&mut data);
    let x = DenseMatrix::new(samples, dim, data)?;
    let targets: Vec<f64> = (0..samples).map(|_| rng.normal()).collect();
    let dataset = Dataset {
        inputs: x.clone(),
        targets: Targets::Values(DenseMatrix::new(samples, 1, targets)?),
    };
    let base = MlpModel::new(&[dim, 1], masklab::nn::Activation::Relu, &mut rng)?;
    let mut model = attach_peft(&base, &[LayerSpec::Full], &mut rng)?;
    let est = hessian_spectral_norm_on(
        &mut model,
        &dataset,
        LossKind::SquaredError,
        500,
        1e-12,
        &mut rng,
    )?;
    let gram = x.transpose().row_gram();
    let analytic = sym_eigen(&gram, SYM_EIGEN_TOL)?.spectrum.lambda1() / samples as f64;
    let rel_error = (est.value - analytic).abs() / analytic;
    Ok(QuadraticCheck {
        estimate: est.value,
        analytic,
        rel_error,
        tolerance: tol,
        passed: rel_error <= tol,
    })
}

fn trend_csv(series: &TrendSeries, value_name: &str, comments: &[String]) -> String {
    let rows: Vec<Vec<String>> = series
        .densities
        .iter()
        .zip(&series.medians)
        .map(|(d, m)| vec![fmt_f64(*d), fmt_f64(*m)])
        .collect();
    csv_document(comments, &["density", value_name], &rows)
}

pub fn run(opts: &RunOptions) -> Result<bool, CmdError> {
    let mut cfg: ProbeCmdConfig = super::common::load_config(&opts.config_path)?;
    if let Some(seed) = opts.seed_override {
        cfg.master_seed = seed;
    }
    if cfg.density_learning_rates.len() != cfg.densities.len() {
        return Err(CmdError::Config(
            "density_learning_rates must match densities in length".to_string(),
        ));
    }
    let manifest = ExperimentManifest::new("probe", &cfg, cfg.master_seed, opts.timings);

    let quadratic = quadratic_head_check(
        cfg.quadratic_check.samples,
        cfg.quadratic_check.dim,
        cfg.quadratic_check.rel_tolerance,
        cfg.master_seed,
    )?;

    let pair = build_task_pair(&cfg.task, cfg.master_seed)?;
    let pretrained = build_pretrained(&cfg.pretrain, &pair, cfg.master_seed)?;

    let hessian_at_init = hessian_at_init_trend(
        &pretrained,
        &pair.target,
        &cfg.densities,
        cfg.seeds,
        cfg.master_seed,
        cfg.hessian_iters,
        cfg.hessian_tol,
    )?;

    // Hessian after fine-tuning at each density's assigned rate; the Open
    // Question of where to measure is resolved by reporting both, asserting
    // trends at initialization only.
    let template = TrainConfig::new(
        cfg.finetune.optimizer,
        1.0,
        cfg.finetune.epochs,
        cfg.finetune.batch_size,
    )?;
    let mut after_samples = vec![Vec::with_capacity(cfg.seeds as usize); cfg.densities.len()];
    for s in 0..cfg.seeds {
        let stream = mask_stream(cfg.master_seed, s);
        for (di, (&p, &lr)) in cfg
            .densities
            .iter()
            .zip(&cfg.density_learning_rates)
            .enumerate()
        {
            let mut model =
                attach_masked_hidden(&pretrained, p, MaskMode::ExactCount, &mut stream.clone())?;
            let mut tcfg = template.clone();
            tcfg.learning_rate = lr;
            let mut train_rng = RngStream::new(cfg.master_seed, 0xAF7E).substream(s);
            let metrics = finetune(&mut model, &pair.target, &tcfg, &mut train_rng)?;
            if metrics.diverged {
                continue;
            }
            let mut probe_rng = RngStream::new(cfg.master_seed, 0xAF7F).substream(s);
            let est = hessian_spectral_norm(
                &mut model,
                &pair.target,
                cfg.hessian_iters,
                cfg.hessian_tol,
                &mut probe_rng,
            )?;
            after_samples[di].push(est.value);
        }
    }
    let hessian_after_training = TrendSeries {
        densities: cfg.densities.clone(),
        medians: after_samples.iter().map(|v| median(v)).collect(),
        samples: after_samples,
    };

    let distance_at_matched_loss = distance_at_matched_loss_trend(
        &pretrained,
        &pair.target,
        &cfg.densities,
        &cfg.density_learning_rates,
        &template,
        cfg.seeds,
        cfg.master_seed,
    )?;

    // Longer-training compensation for the sparsest density at a fraction of
    // its assigned rate, median curve over seeds.
    let sparsest = cfg.densities.len() - 1;
    let small_lr = cfg.density_learning_rates[sparsest] * cfg.longer_training.lr_fraction;
    let lt_template = standard_finetune_config(small_lr).map_err(CmdError::from)?;
    let mut lt_curves: Vec<Vec<LongerTrainingPoint>> = Vec::new();
    for s in 0..cfg.seeds {
        let stream = mask_stream(cfg.master_seed, s);
        let model = attach_masked_hidden(
            &pretrained,
            cfg.densities[sparsest],
            MaskMode::ExactCount,
            &mut stream.clone(),
        )?;
        let curve = longer_training_probe(
            &model,
            &pair.target,
            small_lr,
            &cfg.longer_training.epoch_grid,
            &lt_template,
            cfg.master_seed.wrapping_add(s),
        )?;
        lt_curves.push(curve);
    }
    let longer_training_median: Vec<LongerTrainingPoint> = (0..cfg.longer_training.epoch_grid.len())
        .map(|i| {
            let tests: Vec<f64> = lt_curves.iter().map(|c| c[i].test_accuracy).collect();
            let trains: Vec<f64> = lt_curves.iter().map(|c| c[i].train_accuracy).collect();
            let losses: Vec<f64> = lt_curves.iter().map(|c| c[i].final_train_loss).collect();
            LongerTrainingPoint {
                epochs: cfg.longer_training.epoch_grid[i],
                train_accuracy: median(&trains),
                test_accuracy: median(&tests),
                final_train_loss: median(&losses),
            }
        })
        .collect();

    let checks = vec![CheckResult::new(
        "quadratic_head_hessian",
        quadratic.passed,
        format!(
            "estimate {:.6e} vs analytic {:.6e} (rel {:.2e}, tol {:.0e})",
            quadratic.estimate, quadratic.analytic, quadratic.rel_error, quadratic.tolerance
        ),
    )];
    let passed = all_passed(&checks);

    write_file(
        &opts.out_dir,
        "hessian_init_medians.csv",
        &trend_csv(&hessian_at_init, "median_hessian_norm", &manifest.csv_comments()),
    )?;
    write_file(
        &opts.out_dir,
        "distance_medians.csv",
        &trend_csv(
            &distance_at_matched_loss,
            "median_distance",
            &manifest.csv_comments(),
        ),
    )?;
    let lt_rows: Vec<Vec<String>> = longer_training_median
        .iter()
        .map(|p| {
            vec![
                p.epochs.to_string(),
                fmt_f64(p.train_accuracy),
                fmt_f64(p.test_accuracy),
                fmt_f64(p.final_train_loss),
            ]
        })
        .collect();
    write_file(
        &opts.out_dir,
        "longer_training.csv",
        &csv_document(
            &manifest.csv_comments(),
            &["epochs", "median_train_acc", "median_test_acc", "median_loss"],
            &lt_rows,
        ),
    )?;

    let output = ProbeOutput {
        manifest: &manifest,
        quadratic,
        hessian_at_init,
        hessian_after_training,
        distance_at_matched_loss,
        longer_training_median,
        checks,
        all_passed: passed,
    };
    write_json(&opts.out_dir, "probe_report.json", &output)?;
    write_provenance(
        &opts.out_dir,
        &manifest,
        &cfg,
        &[
            "probe_report.json",
            "hessian_init_medians.csv",
            "distance_medians.csv",
            "longer_training.csv",
        ],
    )?;
    Ok(passed)
}
