use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::matrix::DenseMatrix;

/// Default relative off-diagonal mass at which the Jacobi sweep stops.
pub const SYM_EIGEN_TOL: f64 = 1e-12;
/// Maximum number of full Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;
/// Default relative cutoff below which an eigenvalue counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Eigenvalues in non-increasing order together with the relative cutoff
/// that separates "positive" eigenvalues from numerical zero.
///
/// An eigenvalue counts as positive iff it exceeds `threshold * lambda_1`
/// (with `lambda_1 > 0`); if the top eigenvalue is not positive the positive
/// set is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    positivity_threshold: f64,
}

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>, positivity_threshold: f64) -> Result<Self> {
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("eigenvalues must be non-increasing"));
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("eigenvalues".into()));
        }
        Ok(Self {
            eigenvalues,
            positivity_threshold,
        })
    }

    pub fn from_unsorted(mut eigenvalues: Vec<f64>, positivity_threshold: f64) -> Result<Self> {
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        Self::new(eigenvalues, positivity_threshold)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest eigenvalue, or 0 for an empty spectrum.
    pub fn lambda1(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn positivity_threshold(&self) -> f64 {
        self.positivity_threshold
    }

    /// The eigenvalues counted as positive: the leading run with
    /// `lambda_i > threshold * lambda_1`, empty when `lambda_1 <= 0`.
    pub fn positive(&self) -> &[f64] {
        let l1 = self.lambda1();
        if l1 <= 0.0 {
            return &[];
        }
        let cut = self.positivity_threshold * l1;
        let k = self.eigenvalues.partition_point(|&x| x > cut);
        &self.eigenvalues[..k]
    }
}

/// Result of a symmetric eigendecomposition: `A = V diag(lambda) V^T` with
/// eigenvalues descending and eigenvectors as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub spectrum: Spectrum,
    pub vectors: DenseMatrix,
}

impl SymEigen {
    /// Column `i` of the eigenvector matrix.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        (0..self.vectors.rows())
            .map(|r| self.vectors.get(r, i))
            .collect()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Convergence is declared when the off-diagonal Frobenius mass drops below
/// `tol` times the total Frobenius norm. Matrices here stay small (the d >> n
/// regime is handled through n x n Gram matrices), where Jacobi is robust and
/// fully accurate.
pub fn sym_eigen(a: &DenseMatrix, tol: f64) -> Result<SymEigen> {
    if a.rows() != a.cols() {
        return Err(Error::invalid(format!(
            "sym_eigen requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_symmetric(tol.max(1e-14)) {
        return Err(Error::invalid(
            "sym_eigen requires a symmetric matrix".to_string(),
        ));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymEigen {
            spectrum: Spectrum::new(vec![], DEFAULT_RANK_TOL)?,
            vectors: DenseMatrix::zeros(0, 0),
        });
    }

    let mut m = a.clone();
    // Symmetrize exactly so the rotations act on a symmetric matrix even when
    // the input only satisfies the tolerance.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let mut v = DenseMatrix::identity(n);
    let total_norm = m.frobenius_norm();

    let off = |m: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m.get(i, j) * m.get(i, j);
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > tol * total_norm {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off(&m) / total_norm.max(f64::MIN_POSITIVE),
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // Rotation angle that annihilates a_pq (Golub & Van Loan 8.4).
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // A <- J^T A J applied to rows/columns p and q.
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    // Sort eigenpairs by descending eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new_col, v.get(r, old_col));
        }
    }

    Ok(SymEigen {
        spectrum: Spectrum::new(eigenvalues, DEFAULT_RANK_TOL)?,
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::matrix::dot;

    fn diag(values: &[f64]) -> DenseMatrix {
        let n = values.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[test]
    fn diagonal_matrix_spectrum() {
        let e = sym_eigen(&diag(&[1.0, 4.0]), SYM_EIGEN_TOL).unwrap();
        assert_eq!(e.spectrum.eigenvalues(), &[4.0, 1.0]);
    }

    #[test]
    fn identity_spectrum() {
        let e = sym_eigen(&DenseMatrix::identity(3), SYM_EIGEN_TOL).unwrap();
        assert_eq!(e.spectrum.eigenvalues(), &[1.0, 1.0, 1.0]);
    }

    // Oracle: roots of det(A - lambda I) for the 2x2 case, found by solving
    // the characteristic polynomial lambda^2 - tr*lambda + det = 0.
    fn char_poly_roots_2x2(a: &DenseMatrix) -> (f64, f64) {
        let tr = a.get(0, 0) + a.get(1, 1);
        let det = a.get(0, 0) * a.get(1, 1) - a.get(0, 1) * a.get(1, 0);
        let disc = (tr * tr - 4.0 * det).sqrt();
        ((tr + disc) / 2.0, (tr - disc) / 2.0)
    }

    #[test]
    fn two_by_two_matches_characteristic_polynomial() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (r1, r2) = char_poly_roots_2x2(&a);
        assert_eq!((r1, r2), (3.0, 1.0));
        let e = sym_eigen(&a, SYM_EIGEN_TOL).unwrap();
        assert!((e.spectrum.eigenvalues()[0] - 3.0).abs() < 1e-12);
        assert!((e.spectrum.eigenvalues()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        let rect = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            sym_eigen(&rect, SYM_EIGEN_TOL),
            Err(Error::InvalidInput(_))
        ));
        let asym = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            sym_eigen(&asym, SYM_EIGEN_TOL),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn eigenvectors_satisfy_residual_and_orthonormality() {
        let a = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.2],
            vec![0.5, -0.2, 1.0],
        ])
        .unwrap();
        let e = sym_eigen(&a, SYM_EIGEN_TOL).unwrap();
        let l1 = e.spectrum.lambda1();
        for i in 0..3 {
            let vi = e.vector(i);
            let av = a.matvec(&vi).unwrap();
            let li = e.spectrum.eigenvalues()[i];
            for k in 0..3 {
                assert!((av[k] - li * vi[k]).abs() <= 1e-10 * l1);
            }
            for j in 0..3 {
                let vj = e.vector(j);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&vi, &vj) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_matrix_converges_immediately() {
        let e = sym_eigen(&DenseMatrix::zeros(4, 4), SYM_EIGEN_TOL).unwrap();
        assert_eq!(e.spectrum.eigenvalues(), &[0.0; 4]);
        assert!(e.spectrum.positive().is_empty());
    }

    #[test]
    fn spectrum_positive_prefix() {
        let s = Spectrum::new(vec![4.0, 1.0, 1e-14, 0.0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s.positive(), &[4.0, 1.0]);
        let all_zero = Spectrum::new(vec![0.0, 0.0], DEFAULT_RANK_TOL).unwrap();
        assert!(all_zero.positive().is_empty());
        let negative = Spectrum::new(vec![-1.0, -2.0], DEFAULT_RANK_TOL).unwrap();
        assert!(negative.positive().is_empty());
    }
}
