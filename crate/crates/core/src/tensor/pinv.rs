use crate::error::{Error, Result};
use crate::tensor::eigen::{sym_eigen, SymEigen, SYM_EIGEN_TOL};
use crate::tensor::matrix::{dot, DenseMatrix};

/// Minimum-norm least-squares solver for wide systems, built on the Gram
/// identity `B^+ = B^T (B B^T)^+`.
///
/// The n x n Gram matrix `B B^T` is eigendecomposed once; eigenvalues above
/// `tau * lambda_1` are inverted and the rest treated as exact zeros, so the
/// same cutoff defines both the numerical rank and the "lambda_i > 0" sums.
pub struct GramSolver {
    b: DenseMatrix,
    eig: SymEigen,
    cutoff: f64,
}

impl GramSolver {
    pub fn new(b: &DenseMatrix, tau: f64) -> Result<Self> {
        let gram = b.row_gram();
        let eig = sym_eigen(&gram, SYM_EIGEN_TOL)?;
        let lambda1 = eig.spectrum.lambda1().max(0.0);
        Ok(Self {
            b: b.clone(),
            eig,
            cutoff: tau * lambda1,
        })
    }

    pub fn spectrum_lambda1(&self) -> f64 {
        self.eig.spectrum.lambda1()
    }

    /// Eigenvalues of `B B^T` above the rank cutoff.
    pub fn positive_eigenvalues(&self) -> Vec<f64> {
        self.eig
            .spectrum
            .eigenvalues()
            .iter()
            .copied()
            .filter(|&l| l > self.cutoff && l > 0.0)
            .collect()
    }

    /// Trace of `(B^T B)^+`, i.e. the sum of inverse positive eigenvalues.
    pub fn pinv_trace(&self) -> f64 {
        self.positive_eigenvalues().iter().map(|l| 1.0 / l).sum()
    }

    /// `(B B^T)^+ y`.
    pub fn gram_pinv_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.b.rows();
        if y.len() != n {
            return Err(Error::invalid(format!(
                "gram solve: rhs length {} does not match {} rows",
                y.len(),
                n
            )));
        }
        let mut out = vec![0.0; n];
        for (i, &lambda) in self.eig.spectrum.eigenvalues().iter().enumerate() {
            if lambda <= self.cutoff || lambda <= 0.0 {
                continue;
            }
            let u = self.eig.vector(i);
            let coeff = dot(&u, y) / lambda;
            for k in 0..n {
                out[k] += coeff * u[k];
            }
        }
        Ok(out)
    }

    /// `B^+ y = B^T (B B^T)^+ y`, the minimum-norm least-squares solution.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        let u = self.gram_pinv_apply(y)?;
        self.b.vecmat(&u)
    }
}

/// One-shot `B^+ y` for `B` of shape n x d (n <= d expected).
pub fn gram_pinv_solve(b: &DenseMatrix, y: &[f64], tau: f64) -> Result<Vec<f64>> {
    GramSolver::new(b, tau)?.solve(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::eigen::DEFAULT_RANK_TOL;

    #[test]
    fn identity_solve() {
        let b = DenseMatrix::identity(2);
        let x = gram_pinv_solve(&b, &[3.0, 7.0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(x, vec![3.0, 7.0]);
    }

    // Oracle: for B = [[1,0,0],[0,2,0]] the rows are orthogonal, so the
    // normal equations B B^T u = y give u = (1, 1/2) and x = B^T u = (1,1,0).
    #[test]
    fn hand_pseudo_inverse() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0]]).unwrap();
        let x = gram_pinv_solve(&b, &[1.0, 2.0], DEFAULT_RANK_TOL).unwrap();
        for (got, want) in x.iter().zip(&[1.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_gives_zero_vector() {
        let b = DenseMatrix::zeros(2, 4);
        let x = gram_pinv_solve(&b, &[1.0, -1.0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn dimension_mismatch() {
        let b = DenseMatrix::zeros(2, 4);
        assert!(gram_pinv_solve(&b, &[1.0], DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn residual_is_orthogonal_to_rows() {
        use crate::tensor::rng::RngStream;
        let mut rng = RngStream::new(11, 0);
        let n = 3;
        let d = 8;
        let mut data = vec![0.0; n * d];
        rng.fill_normal(&mut data);
        let b = DenseMatrix::new(n, d, data).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x = gram_pinv_solve(&b, &y, DEFAULT_RANK_TOL).unwrap();
        let bx = b.matvec(&x).unwrap();
        let resid: Vec<f64> = bx.iter().zip(&y).map(|(a, b)| a - b).collect();
        let back = b.vecmat(&resid).unwrap();
        for v in back {
            assert!(v.abs() < 1e-8, "B^T (Bx - y) component {v}");
        }
    }
}
