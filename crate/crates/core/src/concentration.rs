//! Monte-Carlo verification of the eigenvalue concentration bound for
//! masked Gram matrices, the trace identity E(sum lambda_i) = p ||X||_F^2,
//! and the sub-Gaussian tail of the quadratic form <u, Q u> with
//! Q = X M X^T - p X X^T.
//!
//! The deviation bound carries its log term in one of two forms:
//! sqrt(2 log(1/delta) / (d n^2 r^4)), or — as the Chernoff exponent
//! exp(4n - t^2 / (2 d n^2 r^4)) actually yields — the dimensional factor
//! in the numerator, sqrt(2 d n^2 r^4 log(1/delta)). Both are computed and
//! reported; assertions use the derivation-consistent variant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linreg::masked_gram;
use crate::masking::{Mask, MaskMode};
use crate::tensor::{dot, sym_eigen, DenseMatrix, RngStream, Spectrum, SYM_EIGEN_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVariant {
    AsStated,
    ProofConsistent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    pub p: f64,
    pub trials: usize,
    pub delta: f64,
    pub bound_variant: BoundVariant,
}

impl ConcentrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(format!("p = {} outside [0, 1]", self.p)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta = {} outside (0, 1)",
                self.delta
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        Ok(())
    }
}

/// Per-index deviation statistics over sampled Bernoulli(p) masks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationReport {
    pub p: f64,
    pub trials: usize,
    pub delta: f64,
    pub bound_variant: BoundVariant,
    /// p * lambda_i(X^T X) for the top n indices.
    pub reference: Vec<f64>,
    pub mean_eigenvalues: Vec<f64>,
    /// |mean lambda_i - p lambda_i| / (p lambda_i) per index.
    pub mean_rel_error: Vec<f64>,
    pub max_deviation: Vec<f64>,
    /// Bound of the configured variant (what violations count against).
    pub bound: f64,
    pub bound_as_stated: f64,
    pub bound_proof_consistent: f64,
    pub violations: usize,
    pub violation_fraction: f64,
    pub trace_mc_mean: f64,
    pub trace_analytic: f64,
    pub trace_std_error: f64,
}

/// lambda_i(M X^T X M) through the n x n Gram matrix X M X^T, which shares
/// the nonzero spectrum; the remaining d - n eigenvalues are zero.
pub fn masked_spectrum(x: &DenseMatrix, mask: &Mask) -> Result<Spectrum> {
    let gram = masked_gram(x, mask)?;
    Ok(sym_eigen(&gram, SYM_EIGEN_TOL)?.spectrum)
}

/// The deviation bound 2 sqrt(2 d n^3 r^4) + (log term per variant).
pub fn analytic_bound(n: usize, d: usize, r: f64, delta: f64, variant: BoundVariant) -> f64 {
    let n = n as f64;
    let d = d as f64;
    let r4 = r.powi(4);
    let head = 2.0 * (2.0 * d * n.powi(3) * r4).sqrt();
    let log_term = (1.0 / delta).ln();
    match variant {
        BoundVariant::AsStated => head + (2.0 * log_term / (d * n * n * r4)).sqrt(),
        BoundVariant::ProofConsistent => head + (2.0 * d * n * n * r4 * log_term).sqrt(),
    }
}

fn check_entries_in_range(x: &DenseMatrix, r: f64) -> Result<()> {
    if r <= 0.0 {
        return Err(Error::precondition("entry bound r must be positive"));
    }
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            if !(0.0..=r).contains(&v) {
                return Err(Error::precondition(format!(
                    "entry ({i}, {j}) = {v} outside [0, {r}]"
                )));
            }
        }
    }
    Ok(())
}

/// Samples `trials` Bernoulli(p) masks and compares every lambda_i(X M X^T)
/// against p lambda_i(X^T X). A trial violates the bound when any index
/// deviates beyond it.
pub fn deviation_trial_suite(
    x: &DenseMatrix,
    r: f64,
    cfg: &ConcentrationConfig,
    rng: &RngStream,
) -> Result<DeviationReport> {
    cfg.validate()?;
    check_entries_in_range(x, r)?;
    let n = x.rows();
    let d = x.cols();

    let full = sym_eigen(&x.row_gram(), SYM_EIGEN_TOL)?;
    let reference: Vec<f64> = full
        .spectrum
        .eigenvalues()
        .iter()
        .map(|l| cfg.p * l)
        .collect();

    let bound_as_stated = analytic_bound(n, d, r, cfg.delta, BoundVariant::AsStated);
    let bound_proof = analytic_bound(n, d, r, cfg.delta, BoundVariant::ProofConsistent);
    let bound = match cfg.bound_variant {
        BoundVariant::AsStated => bound_as_stated,
        BoundVariant::ProofConsistent => bound_proof,
    };

    let spectra: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut trial_rng = rng.substream(trial as u64);
            let mask = Mask::gen_random(&[d], cfg.p, MaskMode::Bernoulli, &mut trial_rng)
                .expect("p validated");
            masked_spectrum(x, &mask)
                .expect("dims fixed")
                .eigenvalues()
                .to_vec()
        })
        .collect();

    let t = cfg.trials as f64;
    let mut mean_eigenvalues = vec![0.0; n];
    let mut max_deviation = vec![0.0f64; n];
    let mut violations = 0usize;
    let mut traces = Vec::with_capacity(cfg.trials);
    for lams in &spectra {
        let mut worst = 0.0f64;
        for i in 0..n {
            mean_eigenvalues[i] += lams[i] / t;
            let dev = (lams[i] - reference[i]).abs();
            max_deviation[i] = max_deviation[i].max(dev);
            worst = worst.max(dev);
        }
        if worst > bound {
            violations += 1;
        }
        traces.push(lams.iter().sum::<f64>());
    }

    let mean_rel_error = mean_eigenvalues
        .iter()
        .zip(&reference)
        .map(|(m, r)| {
            if *r == 0.0 {
                m.abs()
            } else {
                (m - r).abs() / r
            }
        })
        .collect();

    let trace_mc_mean = traces.iter().sum::<f64>() / t;
    let trace_analytic = cfg.p * x.frobenius_norm().powi(2);
    let trace_var = traces
        .iter()
        .map(|v| (v - trace_mc_mean) * (v - trace_mc_mean))
        .sum::<f64>()
        / (t - 1.0).max(1.0);
    let trace_std_error = (trace_var / t).sqrt();

    Ok(DeviationReport {
        p: cfg.p,
        trials: cfg.trials,
        delta: cfg.delta,
        bound_variant: cfg.bound_variant,
        reference,
        mean_eigenvalues,
        mean_rel_error,
        max_deviation,
        bound,
        bound_as_stated,
        bound_proof_consistent: bound_proof,
        violations,
        violation_fraction: violations as f64 / t,
        trace_mc_mean,
        trace_analytic,
        trace_std_error,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceReport {
    pub trials: usize,
    pub mc_mean_trace: f64,
    /// p ||X||_F^2
    pub analytic: f64,
    pub std_error: f64,
}

/// Monte-Carlo mean of sum_i lambda_i(X M X^T) = Tr(X M X^T) against the
/// exact expectation p ||X||_F^2. The trace is accumulated directly from the
/// selected columns; no eigendecomposition is needed.
pub fn trace_identity_check(
    x: &DenseMatrix,
    p: f64,
    trials: usize,
    rng: &RngStream,
) -> Result<TraceReport> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} outside [0, 1]")));
    }
    if trials < 2 {
        return Err(Error::invalid("trace_identity_check requires trials >= 2"));
    }
    let d = x.cols();
    // Squared column norms: Tr(X M X^T) = sum_{j in mask} ||z_j||^2.
    let mut col_sq = vec![0.0; d];
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            col_sq[j] += v * v;
        }
    }

    let traces: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut trial_rng = rng.substream(trial as u64);
            let mask =
                Mask::gen_random(&[d], p, MaskMode::Bernoulli, &mut trial_rng).expect("p valid");
            mask.coords().iter().map(|&j| col_sq[j]).sum()
        })
        .collect();

    let t = trials as f64;
    let mean = traces.iter().sum::<f64>() / t;
    let var = traces.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
    // Same accumulation order as the per-trial sums, so p = 1 is bit-exact.
    let analytic = p * col_sq.iter().sum::<f64>();
    Ok(TraceReport {
        trials,
        mc_mean_trace: mean,
        analytic,
        std_error: (var / t).sqrt(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailReport {
    pub trials: usize,
    /// Sub-Gaussian variance proxy sum_i (z_i^T u)^4 / 4.
    pub variance_proxy: f64,
    pub s_grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Per-s margin empirical - (envelope + 3 SE); <= 0 everywhere when the
    /// tail stays inside the envelope up to Monte-Carlo error.
    pub violation_margin: Vec<f64>,
    pub max_violation: f64,
}

/// Default tail-check grid: multiples of the proxy standard deviation.
pub fn default_s_grid(variance_proxy: f64) -> Vec<f64> {
    let sd = variance_proxy.sqrt();
    [0.5, 1.0, 1.5, 2.0, 2.5, 3.0].iter().map(|m| m * sd).collect()
}

/// Checks the empirical tail of <u, Q u> = sum_i (m_i - p)(z_i^T u)^2
/// against the sub-Gaussian envelope 2 exp(-s^2 / (2 proxy)).
pub fn quadratic_form_tail_check(
    x: &DenseMatrix,
    u: &[f64],
    p: f64,
    trials: usize,
    s_grid: &[f64],
    rng: &RngStream,
) -> Result<TailReport> {
    if u.len() != x.rows() {
        return Err(Error::invalid("u length does not match rows of X"));
    }
    let norm = dot(u, u).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("u must be a unit vector, |u| = {norm}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} outside [0, 1]")));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let d = x.cols();
    // a_j = (z_j^T u)^2 per column.
    let mut zu = vec![0.0; d];
    for i in 0..x.rows() {
        let ui = u[i];
        for (j, &v) in x.row(i).iter().enumerate() {
            zu[j] += ui * v;
        }
    }
    let a: Vec<f64> = zu.iter().map(|v| v * v).collect();
    let variance_proxy: f64 = a.iter().map(|ai| ai * ai).sum::<f64>() / 4.0;

    let draws: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut trial_rng = rng.substream(trial as u64);
            let mut q = 0.0;
            for &ai in &a {
                let m = if trial_rng.next_f64() < p { 1.0 } else { 0.0 };
                q += (m - p) * ai;
            }
            q
        })
        .collect();

    let t = trials as f64;
    let mut empirical = Vec::with_capacity(s_grid.len());
    let mut envelope = Vec::with_capacity(s_grid.len());
    let mut violation_margin = Vec::with_capacity(s_grid.len());
    let mut max_violation = f64::NEG_INFINITY;
    for &s in s_grid {
        let frac = draws.iter().filter(|&&q| q.abs() > s).count() as f64 / t;
        let env = if variance_proxy == 0.0 {
            if s > 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            (2.0 * (-s * s / (2.0 * variance_proxy)).exp()).min(1.0)
        };
        let se = (env * (1.0 - env) / t).sqrt();
        let margin = frac - (env + 3.0 * se);
        empirical.push(frac);
        envelope.push(env);
        violation_margin.push(margin);
        max_violation = max_violation.max(margin);
    }

    Ok(TailReport {
        trials,
        variance_proxy,
        s_grid: s_grid.to_vec(),
        empirical,
        envelope,
        violation_margin,
        max_violation,
    })
}
