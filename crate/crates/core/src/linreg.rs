//! The overparameterized masked linear-regression model: the loss
//! L(w) = 1/(2n) ||y - X(w~ + Mw)||^2, its gradient, iterative and
//! closed-form gradient-descent trajectories, the stability threshold
//! 2n / lambda_1(M X^T X M), and the solution-norm bound
//! sum_{lambda_i > 0} sigma^2 / lambda_i.
//!
//! Eigenvalues of the d x d matrix M X^T X M are always taken through the
//! n x n Gram matrix X M X^T, which has the same nonzero spectrum because
//! M is an idempotent 0/1 diagonal projector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::Mask;
use crate::tensor::{
    axpy, dist2, dot, sub_vec, sym_eigen, DenseMatrix, GramSolver, RngStream, Spectrum,
    DEFAULT_RANK_TOL, SYM_EIGEN_TOL,
};

/// A masked least-squares instance: features X (rows are samples), targets y,
/// pretrained weights w~ (zero by default since X w~ merges into y), and the
/// entry bound r used by the concentration hypotheses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegressionProblem {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub w_tilde: Vec<f64>,
    pub entry_bound: f64,
}

impl RegressionProblem {
    pub fn new(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::invalid(format!(
                "target length {} does not match {} samples",
                y.len(),
                x.rows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets".into()));
        }
        let entry_bound = x.max_abs();
        let w_tilde = vec![0.0; x.cols()];
        Ok(Self {
            x,
            y,
            w_tilde,
            entry_bound,
        })
    }

    pub fn with_w_tilde(mut self, w_tilde: Vec<f64>) -> Result<Self> {
        if w_tilde.len() != self.d() {
            return Err(Error::invalid("w_tilde length does not match features"));
        }
        self.w_tilde = w_tilde;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// y - X w~, the effective target once the pretrained output is folded in.
    pub fn residual_target(&self) -> Vec<f64> {
        if self.w_tilde.iter().all(|&v| v == 0.0) {
            return self.y.clone();
        }
        let xw = self.x.matvec(&self.w_tilde).expect("dims checked");
        sub_vec(&self.y, &xw)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseModel {
    pub w_star: Vec<f64>,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(w_star: Vec<f64>, sigma: f64) -> Result<Self> {
        if sigma < 0.0 {
            return Err(Error::invalid("noise sigma must be >= 0"));
        }
        Ok(Self { w_star, sigma })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GDConfig {
    pub eta: f64,
    pub steps: usize,
    /// Loss level that flags divergence; None means 1e6 x initial loss.
    pub divergence_cap: Option<f64>,
    /// Optional early stop once the loss reaches this value.
    pub loss_target: Option<f64>,
}

impl GDConfig {
    pub fn new(eta: f64, steps: usize) -> Self {
        Self {
            eta,
            steps,
            divergence_cap: None,
            loss_target: None,
        }
    }
}

/// Factor applied to the initial loss when no explicit divergence cap is set.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub final_w: Vec<f64>,
    /// Loss at every recorded iterate, starting with the initial point.
    pub losses: Vec<f64>,
    pub diverged: bool,
    pub distance_from_init: f64,
    pub steps_run: usize,
}

fn check_dims(prob: &RegressionProblem, mask: &Mask, w: &[f64]) -> Result<()> {
    if mask.numel() != prob.d() {
        return Err(Error::invalid(format!(
            "mask covers {} coordinates, problem has {}",
            mask.numel(),
            prob.d()
        )));
    }
    if w.len() != prob.d() {
        return Err(Error::invalid(format!(
            "weight length {} does not match {} features",
            w.len(),
            prob.d()
        )));
    }
    Ok(())
}

/// X (M w), touching only the mask's coordinates.
fn x_masked_w(x: &DenseMatrix, mask: &Mask, w: &[f64]) -> Vec<f64> {
    let n = x.rows();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = x.row(i);
        out[i] = mask.coords().iter().map(|&j| row[j] * w[j]).sum();
    }
    out
}

/// L(w) = 1/(2n) ||y - X(w~ + M w)||^2
pub fn masked_loss(prob: &RegressionProblem, mask: &Mask, w: &[f64]) -> Result<f64> {
    check_dims(prob, mask, w)?;
    let target = prob.residual_target();
    let xw = x_masked_w(&prob.x, mask, w);
    let n = prob.n() as f64;
    let ss: f64 = target
        .iter()
        .zip(&xw)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(ss / (2.0 * n))
}

/// grad L = 1/n (M X^T X M w - M X^T (y - X w~)); identically zero off the mask.
pub fn masked_grad(prob: &RegressionProblem, mask: &Mask, w: &[f64]) -> Result<Vec<f64>> {
    check_dims(prob, mask, w)?;
    let target = prob.residual_target();
    let xw = x_masked_w(&prob.x, mask, w);
    let resid: Vec<f64> = xw.iter().zip(&target).map(|(p, t)| p - t).collect();
    let n = prob.n() as f64;
    let mut grad = vec![0.0; prob.d()];
    for &j in mask.coords() {
        let mut g = 0.0;
        for i in 0..prob.n() {
            g += prob.x.get(i, j) * resid[i];
        }
        grad[j] = g / n;
    }
    Ok(grad)
}

/// Exact gradient descent w_{i+1} = w_i - eta * grad L(w_i), recording the
/// loss at every iterate. Divergence is flagged when the loss exceeds the
/// cap or turns non-finite.
pub fn gd_iterate(
    prob: &RegressionProblem,
    mask: &Mask,
    cfg: &GDConfig,
    w0: &[f64],
) -> Result<TrajectoryResult> {
    check_dims(prob, mask, w0)?;
    let mut w = w0.to_vec();
    let initial_loss = masked_loss(prob, mask, &w)?;
    let cap = cfg
        .divergence_cap
        .unwrap_or(DEFAULT_DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE));
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    losses.push(initial_loss);
    let mut diverged = !initial_loss.is_finite() || initial_loss > cap;
    let mut steps_run = 0;
    if !diverged {
        for _ in 0..cfg.steps {
            if cfg.loss_target.is_some_and(|t| *losses.last().unwrap() <= t) {
                break;
            }
            let grad = masked_grad(prob, mask, &w)?;
            axpy(-cfg.eta, &grad, &mut w);
            steps_run += 1;
            let loss = masked_loss(prob, mask, &w).unwrap_or(f64::INFINITY);
            losses.push(loss);
            if !loss.is_finite() || loss > cap {
                diverged = true;
                break;
            }
        }
    }
    let distance_from_init = dist2(&w, w0);
    Ok(TrajectoryResult {
        final_w: w,
        losses,
        diverged,
        distance_from_init,
        steps_run,
    })
}

/// X M X^T, the n x n Gram matrix of the masked features.
pub fn masked_gram(x: &DenseMatrix, mask: &Mask) -> Result<DenseMatrix> {
    if mask.numel() != x.cols() {
        return Err(Error::invalid(format!(
            "mask covers {} coordinates, matrix has {} columns",
            mask.numel(),
            x.cols()
        )));
    }
    let n = x.rows();
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let ri = x.row(i);
        for j in i..n {
            let rj = x.row(j);
            let v: f64 = mask.coords().iter().map(|&k| ri[k] * rj[k]).sum();
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    Ok(g)
}

/// Solver for the masked system B = X M, exposing the minimum-norm
/// least-squares solution w^ = (X M)^+ y and the positive spectrum of
/// M X^T X M.
pub struct MaskedSolver<'a> {
    prob: &'a RegressionProblem,
    gram: GramSolver,
}

impl<'a> MaskedSolver<'a> {
    pub fn new(prob: &'a RegressionProblem, mask: &Mask) -> Result<Self> {
        if mask.numel() != prob.d() {
            return Err(Error::invalid("mask does not cover the feature space"));
        }
        // Rows of B = X M: features with unselected coordinates zeroed.
        let mut masked = DenseMatrix::zeros(prob.n(), prob.d());
        for i in 0..prob.n() {
            let row = prob.x.row(i);
            for &j in mask.coords() {
                masked.set(i, j, row[j]);
            }
        }
        let gram = GramSolver::new(&masked, DEFAULT_RANK_TOL)?;
        Ok(Self { prob, gram })
    }

    /// (X M)^+ rhs
    pub fn pinv_apply(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.gram.solve(rhs)
    }

    /// w^ = (X M)^+ (y - X w~)
    pub fn min_norm_solution(&self) -> Result<Vec<f64>> {
        self.pinv_apply(&self.prob.residual_target())
    }

    pub fn lambda1(&self) -> f64 {
        self.gram.spectrum_lambda1().max(0.0)
    }

    pub fn positive_eigenvalues(&self) -> Vec<f64> {
        self.gram.positive_eigenvalues()
    }

    pub fn pinv_trace(&self) -> f64 {
        self.gram.pinv_trace()
    }
}

/// Evaluates the closed-form trajectory
/// w_t = (I - eta/n M X^T X M)^t (w_0 - w^) + w^ with w^ = (X M)^+ y,
/// through the Gram-trick eigendecomposition of X M X^T. Components of
/// w_0 - w^ outside the positive eigenspace are left untouched, matching the
/// identity action of the iteration there.
pub fn gd_closed_form(
    prob: &RegressionProblem,
    mask: &Mask,
    cfg: &GDConfig,
    w0: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    check_dims(prob, mask, w0)?;
    if t == 0 {
        return Ok(w0.to_vec());
    }
    let solver = MaskedSolver::new(prob, mask)?;
    let w_hat = solver.min_norm_solution()?;
    let mut wt = sub_vec(w0, &w_hat); // delta_0

    let gram = masked_gram(&prob.x, mask)?;
    let eig = sym_eigen(&gram, SYM_EIGEN_TOL)?;
    let lambda1 = eig.spectrum.lambda1().max(0.0);
    let cutoff = DEFAULT_RANK_TOL * lambda1;
    let n = prob.n() as f64;

    for (i, &lambda) in eig.spectrum.eigenvalues().iter().enumerate() {
        if lambda <= cutoff || lambda <= 0.0 {
            continue;
        }
        // Unit eigenvector of M X^T X M for eigenvalue lambda: M X^T u / sqrt(lambda).
        let u = eig.vector(i);
        let mut v = vec![0.0; prob.d()];
        for (row, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let xr = prob.x.row(row);
            for &j in mask.coords() {
                v[j] += ui * xr[j];
            }
        }
        let scale = 1.0 / lambda.sqrt();
        v.iter_mut().for_each(|x| *x *= scale);

        let coeff = dot(&v, &wt);
        let factor = (1.0 - cfg.eta * lambda / n).powf(t as f64) - 1.0;
        axpy(factor * coeff, &v, &mut wt);
    }

    for (w, h) in wt.iter_mut().zip(&w_hat) {
        *w += h;
    }
    Ok(wt)
}

/// Unit top eigenvector of M X^T X M, lifted from the Gram side as
/// M X^T u_1 / sqrt(lambda_1); None when the masked operator is zero. This
/// is the direction used to witness divergence right above the stability
/// threshold.
pub fn masked_top_eigenvector(prob: &RegressionProblem, mask: &Mask) -> Result<Option<Vec<f64>>> {
    if mask.numel() != prob.d() {
        return Err(Error::invalid("mask does not cover the feature space"));
    }
    if mask.is_empty() {
        return Ok(None);
    }
    let gram = masked_gram(&prob.x, mask)?;
    let eig = sym_eigen(&gram, SYM_EIGEN_TOL)?;
    let lambda1 = eig.spectrum.lambda1();
    if lambda1 <= 0.0 {
        return Ok(None);
    }
    let u1 = eig.vector(0);
    let mut v1 = vec![0.0; prob.d()];
    for (row, &ui) in u1.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let xr = prob.x.row(row);
        for &j in mask.coords() {
            v1[j] += ui * xr[j];
        }
    }
    let scale = 1.0 / lambda1.sqrt();
    v1.iter_mut().for_each(|x| *x *= scale);
    Ok(Some(v1))
}

/// 2n / lambda_1(M X^T X M); +inf when the masked operator is zero.
pub fn stability_threshold(prob: &RegressionProblem, mask: &Mask) -> Result<f64> {
    if mask.numel() != prob.d() {
        return Err(Error::invalid("mask does not cover the feature space"));
    }
    if mask.is_empty() {
        return Ok(f64::INFINITY);
    }
    let gram = masked_gram(&prob.x, mask)?;
    let lambda1 = sym_eigen(&gram, SYM_EIGEN_TOL)?.spectrum.lambda1();
    if lambda1 <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * prob.n() as f64 / lambda1)
}

/// sum over positive eigenvalues of sigma^2 / lambda_i.
pub fn solution_norm_bound(spectrum: &Spectrum, sigma: f64) -> Result<f64> {
    if sigma < 0.0 {
        return Err(Error::invalid("sigma must be >= 0"));
    }
    Ok(spectrum
        .positive()
        .iter()
        .map(|&l| sigma * sigma / l)
        .sum())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormBoundReport {
    pub trials: usize,
    pub mc_mean_sq_norm: f64,
    pub std_error: f64,
    /// sigma^2 Tr[(M X^T X M)^+] = sum_{lambda_i > 0} sigma^2 / lambda_i.
    pub bound: f64,
    /// The proof's exact identity: bound + ||(X M)^+ X w*||^2.
    pub exact_identity: f64,
    pub projection_term: f64,
}

/// Monte-Carlo check of the solution-norm bound: draws y = X w* + eps with
/// eps ~ N(0, sigma^2 I) per trial, solves w^ = (X M)^+ y, and compares the
/// mean of ||w^||^2 against both the lower bound and the exact identity.
///
/// Trials use split substreams keyed by trial index, so the trial count, not
/// the worker count, determines the result.
pub fn verify_norm_bound(
    prob: &RegressionProblem,
    noise: &NoiseModel,
    mask: &Mask,
    trials: usize,
    rng: &RngStream,
) -> Result<NormBoundReport> {
    if trials < 2 {
        return Err(Error::invalid("verify_norm_bound requires trials >= 2"));
    }
    if noise.w_star.len() != prob.d() {
        return Err(Error::invalid("w_star length does not match features"));
    }
    let solver = MaskedSolver::new(prob, mask)?;
    let bound = noise.sigma * noise.sigma * solver.pinv_trace();

    // Effective ground truth after folding the pretrained weights into y.
    let w_eff = sub_vec(&noise.w_star, &prob.w_tilde);
    let x_w_star = prob.x.matvec(&w_eff)?;
    let proj = solver.pinv_apply(&x_w_star)?;
    let projection_term = dot(&proj, &proj);
    let exact_identity = bound + projection_term;

    let n = prob.n();
    let sq_norms: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut trial_rng = rng.substream(trial as u64);
            let mut y = x_w_star.clone();
            for yi in y.iter_mut().take(n) {
                *yi += noise.sigma * trial_rng.normal();
            }
            let w_hat = solver.pinv_apply(&y).expect("dims fixed");
            dot(&w_hat, &w_hat)
        })
        .collect();

    let mean = sq_norms.iter().sum::<f64>() / trials as f64;
    let var = sq_norms
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (trials - 1) as f64;
    let std_error = (var / trials as f64).sqrt();

    Ok(NormBoundReport {
        trials,
        mc_mean_sq_norm: mean,
        std_error,
        bound,
        exact_identity,
        projection_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::MaskMode;
    use crate::tensor::{norm2, RngStream};

    fn problem_2x4(seed: u64) -> (RegressionProblem, Mask) {
        let mut rng = RngStream::new(seed, 0);
        let mut data = vec![0.0; 2 * 4];
        rng.fill_normal(&mut data);
        let x = DenseMatrix::new(2, 4, data).unwrap();
        let y = vec![rng.normal(), rng.normal()];
        let prob = RegressionProblem::new(x, y).unwrap();
        let mask = Mask::full(&[4]);
        (prob, mask)
    }

    #[test]
    fn loss_examples() {
        // zero residual
        let x = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let prob = RegressionProblem::new(x, vec![0.0]).unwrap();
        let mask = Mask::full(&[2]);
        assert_eq!(masked_loss(&prob, &mask, &[0.0, 0.0]).unwrap(), 0.0);

        // exact fit
        let x = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let prob = RegressionProblem::new(x, vec![2.0]).unwrap();
        assert_eq!(masked_loss(&prob, &mask, &[1.0, 1.0]).unwrap(), 0.0);

        // empty mask: residual equals y, loss = (1/2) * 4 = 2
        let empty = Mask::empty(&[2]);
        assert_eq!(masked_loss(&prob, &empty, &[9.0, -3.0]).unwrap(), 2.0);
    }

    #[test]
    fn grad_is_zero_on_empty_mask_and_at_minimizer() {
        let (prob, mask) = problem_2x4(100);
        let empty = Mask::empty(&[4]);
        assert_eq!(
            masked_grad(&prob, &empty, &[1.0; 4]).unwrap(),
            vec![0.0; 4]
        );

        let solver = MaskedSolver::new(&prob, &mask).unwrap();
        let w_hat = solver.min_norm_solution().unwrap();
        let g = masked_grad(&prob, &mask, &w_hat).unwrap();
        for v in g {
            assert!(v.abs() < 1e-10, "gradient at minimizer: {v}");
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = RngStream::new(200, 0);
        let mut data = vec![0.0; 3 * 6];
        rng.fill_normal(&mut data);
        let x = DenseMatrix::new(3, 6, data).unwrap();
        let y: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let prob = RegressionProblem::new(x, y).unwrap();
        let mask = Mask::gen_random(&[6], 0.7, MaskMode::Bernoulli, &mut rng).unwrap();
        let w: Vec<f64> = (0..6).map(|_| rng.normal()).collect();

        let g = masked_grad(&prob, &mask, &w).unwrap();
        let h = 1e-6;
        for j in 0..6 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (masked_loss(&prob, &mask, &wp).unwrap()
                - masked_loss(&prob, &mask, &wm).unwrap())
                / (2.0 * h);
            assert!((g[j] - fd).abs() < 1e-6, "coord {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn gd_zero_steps_and_empty_mask() {
        let (prob, mask) = problem_2x4(300);
        let w0 = vec![0.5, -0.5, 0.25, 0.0];
        let cfg = GDConfig::new(0.1, 0);
        let res = gd_iterate(&prob, &mask, &cfg, &w0).unwrap();
        assert_eq!(res.final_w, w0);
        assert_eq!(res.distance_from_init, 0.0);

        let empty = Mask::empty(&[4]);
        let cfg = GDConfig::new(0.1, 50);
        let res = gd_iterate(&prob, &empty, &cfg, &w0).unwrap();
        assert_eq!(res.final_w, w0);
        assert!(!res.diverged);
    }

    #[test]
    fn gd_converges_to_min_norm_loss() {
        let (prob, mask) = problem_2x4(400);
        let thr = stability_threshold(&prob, &mask).unwrap();
        let cfg = GDConfig::new(0.5 * thr, 500);
        let res = gd_iterate(&prob, &mask, &cfg, &[0.0; 4]).unwrap();
        let solver = MaskedSolver::new(&prob, &mask).unwrap();
        let w_hat = solver.min_norm_solution().unwrap();
        let opt_loss = masked_loss(&prob, &mask, &w_hat).unwrap();
        assert!(
            (res.losses.last().unwrap() - opt_loss).abs() < 1e-10,
            "final {} vs optimum {opt_loss}",
            res.losses.last().unwrap()
        );
    }

    #[test]
    fn closed_form_matches_iterative() {
        let mut rng = RngStream::new(500, 0);
        let mut data = vec![0.0; 3 * 8];
        rng.fill_normal(&mut data);
        let x = DenseMatrix::new(3, 8, data).unwrap();
        let y: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let prob = RegressionProblem::new(x, y).unwrap();
        let mask = Mask::gen_random(&[8], 0.6, MaskMode::Bernoulli, &mut rng).unwrap();
        let w0: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let thr = stability_threshold(&prob, &mask).unwrap();
        let cfg = GDConfig::new(0.4 * thr, 37);

        let iterated = gd_iterate(&prob, &mask, &cfg, &w0).unwrap().final_w;
        let closed = gd_closed_form(&prob, &mask, &cfg, &w0, 37).unwrap();
        let scale = 1.0 + norm2(&iterated);
        assert!(dist2(&closed, &iterated) <= 1e-8 * scale);

        // t = 0 returns w0
        assert_eq!(gd_closed_form(&prob, &mask, &cfg, &w0, 0).unwrap(), w0);
    }

    #[test]
    fn closed_form_limit_is_min_norm_solution() {
        let (prob, mask) = problem_2x4(600);
        let thr = stability_threshold(&prob, &mask).unwrap();
        let cfg = GDConfig::new(0.9 * thr, 0);
        let solver = MaskedSolver::new(&prob, &mask).unwrap();
        let w_hat = solver.min_norm_solution().unwrap();
        // Start inside the row span: w0 = 0 qualifies because w0 - w^ then has
        // no component in the untouched null space beyond -w^ itself.
        let w_inf = gd_closed_form(&prob, &mask, &cfg, &[0.0; 4], 20_000).unwrap();
        assert!(dist2(&w_inf, &w_hat) < 1e-10 * (1.0 + norm2(&w_hat)));
    }

    #[test]
    fn stability_threshold_examples() {
        // X = diag(1, 2) in 2x2, mask selects coordinate 0 only:
        // X M X^T = diag(1, 0), lambda_1 = 1, threshold = 2*2/1 = 4.
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let prob = RegressionProblem::new(x, vec![1.0, 1.0]).unwrap();
        let m0 = Mask::from_coords(&[2], vec![0]).unwrap();
        assert!((stability_threshold(&prob, &m0).unwrap() - 4.0).abs() < 1e-12);

        let empty = Mask::empty(&[2]);
        assert_eq!(stability_threshold(&prob, &empty).unwrap(), f64::INFINITY);

        let x = DenseMatrix::identity(2);
        let prob = RegressionProblem::new(x, vec![1.0, 1.0]).unwrap();
        let full = Mask::full(&[2]);
        assert!((stability_threshold(&prob, &full).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn norm_bound_examples() {
        let s = Spectrum::new(vec![1.0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(solution_norm_bound(&s, 1.0).unwrap(), 1.0);

        let s = Spectrum::new(vec![4.0, 1.0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(solution_norm_bound(&s, 2.0).unwrap(), 5.0);

        assert_eq!(solution_norm_bound(&s, 0.0).unwrap(), 0.0);
        assert!(solution_norm_bound(&s, -1.0).is_err());
    }

    #[test]
    fn verify_norm_bound_orthonormal_rows() {
        // X with orthonormal rows, full mask, w* = 0, sigma = 1:
        // all positive eigenvalues are 1, so E||w^||^2 = n exactly.
        let x = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let prob = RegressionProblem::new(x, vec![0.0; 3]).unwrap();
        let mask = Mask::full(&[4]);
        let noise = NoiseModel::new(vec![0.0; 4], 1.0).unwrap();
        let rng = RngStream::new(700, 0);
        let rep = verify_norm_bound(&prob, &noise, &mask, 4000, &rng).unwrap();
        assert!((rep.bound - 3.0).abs() < 1e-12);
        assert!((rep.exact_identity - 3.0).abs() < 1e-12);
        assert!(
            (rep.mc_mean_sq_norm - 3.0).abs() <= 3.0 * rep.std_error,
            "mc mean {} vs 3 (3se = {})",
            rep.mc_mean_sq_norm,
            3.0 * rep.std_error
        );
    }

    #[test]
    fn verify_norm_bound_noiseless_is_deterministic() {
        let (prob, mask) = problem_2x4(800);
        let mut w_star = vec![0.0; 4];
        w_star[0] = 1.0;
        let noise = NoiseModel::new(w_star, 0.0).unwrap();
        let rng = RngStream::new(801, 0);
        let rep = verify_norm_bound(&prob, &noise, &mask, 16, &rng).unwrap();
        assert_eq!(rep.bound, 0.0);
        assert!(rep.std_error < 1e-20);
        assert!((rep.mc_mean_sq_norm - rep.projection_term).abs() < 1e-12);
    }

    #[test]
    fn verify_norm_bound_requires_two_trials() {
        let (prob, mask) = problem_2x4(900);
        let noise = NoiseModel::new(vec![0.0; 4], 1.0).unwrap();
        let rng = RngStream::new(901, 0);
        assert!(verify_norm_bound(&prob, &noise, &mask, 1, &rng).is_err());
    }
}
