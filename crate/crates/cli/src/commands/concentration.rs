//! The `concentration` subcommand: the eigenvalue deviation suite per mask
//! density, the trace identity, and the quadratic-form tail check.

use serde::Serialize;

use masklab::concentration::{
    default_s_grid, deviation_trial_suite, quadratic_form_tail_check, trace_identity_check,
    ConcentrationConfig, DeviationReport, TailReport, TraceReport,
};
use masklab::report::{csv_document, fmt_f64};
use masklab::tensor::{norm2, DenseMatrix, RngStream};

use crate::commands::common::{
    all_passed, write_file, write_json, write_provenance, CheckResult, CmdError, RunOptions,
};
use crate::config::ConcentrationCmdConfig;
use crate::manifest::ExperimentManifest;

/// Seeded matrix with entries uniform in [0, 1], satisfying the
/// concentration suite's entry-bound hypothesis with r = 1.
pub fn uniform_instance(n: usize, d: usize, master_seed: u64, stream: u64) -> DenseMatrix {
    let mut rng = RngStream::new(master_seed, stream);
    let data: Vec<f64> = (0..n * d).map(|_| rng.next_f64()).collect();
    DenseMatrix::new(n, d, data).expect("uniforms are finite")
}

fn deviation_csv(report: &DeviationReport, comments: &[String]) -> String {
    let rows: Vec<Vec<String>> = (0..report.reference.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                fmt_f64(report.reference[i]),
                fmt_f64(report.mean_eigenvalues[i]),
                fmt_f64(report.max_deviation[i]),
                fmt_f64(report.bound),
            ]
        })
        .collect();
    csv_document(
        comments,
        &["index", "p_lambda_ref", "mean_lambda", "max_deviation", "bound"],
        &rows,
    )
}

#[derive(Serialize)]
struct ConcentrationOutput<'a> {
    manifest: &'a ExperimentManifest,
    deviations: Vec<DeviationReport>,
    trace: TraceReport,
    tail: TailReport,
    checks: Vec<CheckResult>,
    all_passed: bool,
}

pub fn run(opts: &RunOptions) -> Result<bool, CmdError> {
    let mut cfg: ConcentrationCmdConfig = super::common::load_config(&opts.config_path)?;
    if let Some(seed) = opts.seed_override {
        cfg.master_seed = seed;
    }
    cfg.validate().map_err(CmdError::Config)?;
    let manifest = ExperimentManifest::new("concentration", &cfg, cfg.master_seed, opts.timings);

    let x = uniform_instance(cfg.n, cfg.d, cfg.master_seed, 0xC0);
    let mut deviations = Vec::with_capacity(cfg.ps.len());
    let mut checks = Vec::new();
    for (pi, &p) in cfg.ps.iter().enumerate() {
        let suite_cfg = ConcentrationConfig {
            p,
            trials: cfg.trials,
            delta: cfg.delta,
            bound_variant: cfg.bound_variant,
        };
        let rng = RngStream::new(cfg.master_seed, 0xC1).substream(pi as u64);
        let report = deviation_trial_suite(&x, 1.0, &suite_cfg, &rng)?;
        let doc = deviation_csv(&report, &manifest.csv_comments());
        write_file(&opts.out_dir, &format!("deviation_p{pi}.csv"), &doc)?;
        checks.push(CheckResult::new(
            &format!("violation_fraction_p{p}"),
            report.violation_fraction <= cfg.delta,
            format!(
                "violation fraction {:.4} vs delta {} (bound {:.3e})",
                report.violation_fraction, cfg.delta, report.bound
            ),
        ));
        // Roundoff allowance covers degenerate p, where the Monte Carlo
        // variance is exactly zero but the eigensolver path carries ~1e-12
        // relative error against the direct Frobenius sum.
        let trace_tol = 3.0 * report.trace_std_error
            + 1e-9 * (1.0 + report.trace_analytic.abs());
        checks.push(CheckResult::new(
            &format!("trace_within_3se_p{p}"),
            (report.trace_mc_mean - report.trace_analytic).abs() <= trace_tol,
            format!(
                "mc {:.5} vs analytic {:.5} (3se {:.5})",
                report.trace_mc_mean,
                report.trace_analytic,
                3.0 * report.trace_std_error
            ),
        ));
        deviations.push(report);
    }

    let trace_x = uniform_instance(cfg.trace.n, cfg.trace.d, cfg.master_seed, 0xC2);
    let trace_rng = RngStream::new(cfg.master_seed, 0xC3);
    let trace = trace_identity_check(&trace_x, cfg.trace.p, cfg.trace.trials, &trace_rng)?;
    checks.push(CheckResult::new(
        "trace_identity",
        (trace.mc_mean_trace - trace.analytic).abs() <= 3.0 * trace.std_error,
        format!(
            "mc {:.5} vs p*||X||_F^2 {:.5} (3se {:.5})",
            trace.mc_mean_trace,
            trace.analytic,
            3.0 * trace.std_error
        ),
    ));

    let tail_x = uniform_instance(cfg.tail.n, cfg.tail.d, cfg.master_seed, 0xC4);
    let mut u = vec![0.0; cfg.tail.n];
    RngStream::new(cfg.master_seed, 0xC5).fill_normal(&mut u);
    let nu = norm2(&u);
    u.iter_mut().for_each(|v| *v /= nu);
    let tail_rng = RngStream::new(cfg.master_seed, 0xC6);
    let probe = quadratic_form_tail_check(&tail_x, &u, cfg.tail.p, 16, &[1.0], &tail_rng)?;
    let grid = default_s_grid(probe.variance_proxy);
    let tail = quadratic_form_tail_check(&tail_x, &u, cfg.tail.p, cfg.tail.trials, &grid, &tail_rng)?;
    checks.push(CheckResult::new(
        "tail_envelope",
        tail.max_violation <= 0.0,
        format!("max violation margin {:.3e}", tail.max_violation),
    ));

    let passed = all_passed(&checks);
    let output = ConcentrationOutput {
        manifest: &manifest,
        deviations,
        trace,
        tail,
        checks,
        all_passed: passed,
    };
    write_json(&opts.out_dir, "concentration_report.json", &output)?;
    let names: Vec<String> = (0..cfg.ps.len())
        .map(|pi| format!("deviation_p{pi}.csv"))
        .collect();
    let mut written = vec!["concentration_report.json"];
    written.extend(names.iter().map(String::as_str));
    write_provenance(&opts.out_dir, &manifest, &cfg, &written)?;
    Ok(passed)
}
