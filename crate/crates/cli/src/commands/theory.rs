//! The `theory` subcommand: closed-form/iterative trajectory equivalence,
//! the stability dichotomy at the threshold, and the Monte-Carlo check of
//! the solution-norm bound, each over seeded instance families.

use serde::Serialize;

use masklab::linreg::{
    gd_closed_form, gd_iterate, masked_loss, masked_top_eigenvector, stability_threshold,
    verify_norm_bound, GDConfig, MaskedSolver, NoiseModel, RegressionProblem,
};
use masklab::masking::{Mask, MaskMode};
use masklab::report::{csv_document, fmt_f64};
use masklab::tensor::{dist2, norm2, DenseMatrix, RngStream};

use crate::config::TheoryConfig;
use crate::commands::common::{
    all_passed, write_file, write_json, write_provenance, CheckResult, CmdError, RunOptions,
};
use crate::manifest::ExperimentManifest;

/// Seeded overparameterized instance: n in 2..=8, d <= 40 with d >= 2n + 4
/// kept generous, and a mask that keeps at least n + 2 coordinates so the
/// masked system stays comfortably overparameterized.
pub fn theory_instance(master_seed: u64, idx: u64) -> (RegressionProblem, Mask, Vec<f64>) {
    let mut rng = RngStream::new(master_seed, 0x7E0).substream(idx);
    let n = 2 + (idx % 7) as usize;
    let d = (2 * n + 4 + (idx % 15) as usize).min(40);
    let p = [1.0, 0.7, 0.5, 0.35][(idx % 4) as usize];

    let mut data = vec![0.0; n * d];
    rng.fill_normal(&mut data);
    let x = DenseMatrix::new(n, d, data).expect("finite normals");
    let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let prob = RegressionProblem::new(x, y).expect("dims agree");

    let k_min = (n + 2).min(d);
    let k = ((p * d as f64).round() as usize).max(k_min);
    let p_eff = k as f64 / d as f64;
    let mask = Mask::gen_random(&[d], p_eff, MaskMode::ExactCount, &mut rng).expect("p in range");

    let w0: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    (prob, mask, w0)
}

#[derive(Serialize)]
struct ClosedFormReport {
    instances: usize,
    comparisons: usize,
    max_scaled_error: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct DichotomyReport {
    instances: usize,
    converged: usize,
    diverged: usize,
    max_final_gap: f64,
    passed: bool,
}

#[derive(Serialize)]
struct NormBoundInstance {
    n: usize,
    d: usize,
    mask_size: usize,
    mc_mean_sq_norm: f64,
    std_error: f64,
    bound: f64,
    exact_identity: f64,
    within_3se_of_identity: bool,
    above_bound_minus_3se: bool,
}

#[derive(Serialize)]
struct TheoryReport<'a> {
    manifest: &'a ExperimentManifest,
    closed_form: ClosedFormReport,
    dichotomy: DichotomyReport,
    norm_bound: Vec<NormBoundInstance>,
    checks: Vec<CheckResult>,
    all_passed: bool,
}

pub fn run(opts: &RunOptions) -> Result<bool, CmdError> {
    let mut cfg: TheoryConfig = super::common::load_config(&opts.config_path)?;
    if let Some(seed) = opts.seed_override {
        cfg.master_seed = seed;
    }
    let manifest = ExperimentManifest::new("theory", &cfg, cfg.master_seed, opts.timings);

    // Closed-form trajectory equivalence.
    let mut max_scaled_error = 0.0f64;
    let mut comparisons = 0usize;
    for idx in 0..cfg.closed_form.instances as u64 {
        let (prob, mask, w0) = theory_instance(cfg.master_seed, idx);
        let thr = stability_threshold(&prob, &mask)?;
        if !thr.is_finite() {
            continue;
        }
        for eta_factor in [0.3, 0.9] {
            for &t in &cfg.closed_form.checkpoints {
                let gd = GDConfig::new(eta_factor * thr, t);
                let iterated = gd_iterate(&prob, &mask, &gd, &w0)?.final_w;
                let closed = gd_closed_form(&prob, &mask, &gd, &w0, t)?;
                let scaled = dist2(&closed, &iterated) / (1.0 + norm2(&iterated));
                max_scaled_error = max_scaled_error.max(scaled);
                comparisons += 1;
            }
        }
        if (idx as usize) < cfg.dump_trajectories {
            let gd = GDConfig::new(0.9 * thr, 200);
            let run = gd_iterate(&prob, &mask, &gd, &w0)?;
            let rows: Vec<Vec<String>> = run
                .losses
                .iter()
                .enumerate()
                .map(|(step, loss)| vec![step.to_string(), fmt_f64(*loss)])
                .collect();
            let doc = csv_document(&manifest.csv_comments(), &["step", "loss"], &rows);
            write_file(&opts.out_dir, &format!("trajectory_{idx}.csv"), &doc)?;
        }
    }
    let closed_form = ClosedFormReport {
        instances: cfg.closed_form.instances,
        comparisons,
        max_scaled_error,
        tolerance: cfg.closed_form.tolerance,
        passed: max_scaled_error <= cfg.closed_form.tolerance && comparisons > 0,
    };

    // Stability dichotomy.
    let mut converged = 0usize;
    let mut diverged = 0usize;
    let mut max_final_gap = 0.0f64;
    for idx in 0..cfg.dichotomy.instances as u64 {
        let (prob, mask, _) = theory_instance(cfg.master_seed.wrapping_add(0xD1C), idx);
        let thr = stability_threshold(&prob, &mask)?;
        if !thr.is_finite() {
            continue;
        }
        let solver = MaskedSolver::new(&prob, &mask)?;
        let w_hat = solver.min_norm_solution()?;
        let opt_loss = masked_loss(&prob, &mask, &w_hat)?;

        let mut safe = GDConfig::new(cfg.dichotomy.safe_factor * thr, cfg.dichotomy.convergence_steps);
        safe.loss_target = Some(opt_loss + 0.5 * cfg.dichotomy.loss_tolerance);
        let run = gd_iterate(&prob, &mask, &safe, &vec![0.0; prob.d()])?;
        let gap = (run.losses.last().unwrap() - opt_loss).abs();
        max_final_gap = max_final_gap.max(gap);
        if !run.diverged && gap <= cfg.dichotomy.loss_tolerance {
            converged += 1;
        }

        let v1 = masked_top_eigenvector(&prob, &mask)?.expect("finite threshold implies nonzero");
        let w0_adv: Vec<f64> = w_hat.iter().zip(&v1).map(|(a, b)| a + b).collect();
        let hot = GDConfig::new(cfg.dichotomy.unsafe_factor * thr, cfg.dichotomy.divergence_steps);
        if gd_iterate(&prob, &mask, &hot, &w0_adv)?.diverged {
            diverged += 1;
        }
    }
    let dichotomy = DichotomyReport {
        instances: cfg.dichotomy.instances,
        converged,
        diverged,
        max_final_gap,
        passed: converged == cfg.dichotomy.instances && diverged == cfg.dichotomy.instances,
    };

    // Solution-norm bound.
    let mut norm_bound = Vec::with_capacity(cfg.norm_bound.instances);
    for idx in 0..cfg.norm_bound.instances as u64 {
        let (prob, mask, _) = theory_instance(cfg.master_seed.wrapping_add(0x4B), idx);
        let mut wrng = RngStream::new(cfg.master_seed, 0x57A6).substream(idx);
        let w_star: Vec<f64> = (0..prob.d()).map(|_| wrng.normal()).collect();
        let noise = NoiseModel::new(w_star, cfg.norm_bound.sigma)?;
        let trial_rng = RngStream::new(cfg.master_seed, 0x6C).substream(idx);
        let rep = verify_norm_bound(&prob, &noise, &mask, cfg.norm_bound.trials, &trial_rng)?;
        norm_bound.push(NormBoundInstance {
            n: prob.n(),
            d: prob.d(),
            mask_size: mask.selected_count(),
            mc_mean_sq_norm: rep.mc_mean_sq_norm,
            std_error: rep.std_error,
            bound: rep.bound,
            exact_identity: rep.exact_identity,
            within_3se_of_identity: (rep.mc_mean_sq_norm - rep.exact_identity).abs()
                <= 3.0 * rep.std_error,
            above_bound_minus_3se: rep.mc_mean_sq_norm >= rep.bound - 3.0 * rep.std_error,
        });
    }

    let checks = vec![
        CheckResult::new(
            "closed_form_equivalence",
            closed_form.passed,
            format!(
                "max scaled error {:.3e} over {} comparisons (tol {:.1e})",
                closed_form.max_scaled_error, closed_form.comparisons, closed_form.tolerance
            ),
        ),
        CheckResult::new(
            "stability_dichotomy",
            dichotomy.passed,
            format!(
                "{}/{} converged below threshold, {}/{} diverged above",
                dichotomy.converged, dichotomy.instances, dichotomy.diverged, dichotomy.instances
            ),
        ),
        CheckResult::new(
            "norm_bound",
            norm_bound
                .iter()
                .all(|i| i.within_3se_of_identity && i.above_bound_minus_3se),
            format!("{} instances checked", norm_bound.len()),
        ),
    ];
    let passed = all_passed(&checks);

    let report = TheoryReport {
        manifest: &manifest,
        closed_form,
        dichotomy,
        norm_bound,
        checks,
        all_passed: passed,
    };
    write_json(&opts.out_dir, "theory_report.json", &report)?;
    let mut written = vec!["theory_report.json"];
    let names: Vec<String> = (0..cfg.dump_trajectories)
        .map(|i| format!("trajectory_{i}.csv"))
        .collect();
    written.extend(names.iter().map(String::as_str));
    write_provenance(&opts.out_dir, &manifest, &cfg, &written)?;
    Ok(passed)
}
