//! Reconstruction, agreement, and minimum-norm invariants for the linear
//! algebra substrate.

use masklab::tensor::{
    dot, gram_pinv_solve, norm2, power_method_norm, sym_eigen, DenseMatrix, RngStream,
    DEFAULT_RANK_TOL, SYM_EIGEN_TOL,
};
use proptest::prelude::*;

fn random_symmetric(n: usize, rng: &mut RngStream) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.normal();
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

#[test]
fn sym_eigen_reconstructs_up_to_50x50() {
    let mut rng = RngStream::new(1001, 0);
    for &n in &[2usize, 5, 10, 25, 50] {
        let a = random_symmetric(n, &mut rng);
        let e = sym_eigen(&a, SYM_EIGEN_TOL).unwrap();
        // || A - V diag(l) V^T ||_F <= 10 * tol * ||A||_F
        let mut recon = DenseMatrix::zeros(n, n);
        for k in 0..n {
            let v = e.vector(k);
            let l = e.spectrum.eigenvalues()[k];
            for i in 0..n {
                for j in 0..n {
                    recon.set(i, j, recon.get(i, j) + l * v[i] * v[j]);
                }
            }
        }
        let diff = a.sub(&recon).unwrap().frobenius_norm();
        let budget = 10.0 * SYM_EIGEN_TOL * a.frobenius_norm();
        assert!(diff <= budget.max(1e-11), "n = {n}: {diff} > {budget}");
    }
}

#[test]
fn power_method_agrees_with_sym_eigen_on_gapped_matrices() {
    // Random symmetric positive matrices with a spectral gap >= 10%.
    let mut rng = RngStream::new(1002, 0);
    for trial in 0..20 {
        let n = 3 + (trial % 5);
        let base = random_symmetric(n, &mut rng);
        // A = B^T B + spike in a random direction to force a gap.
        let mut a = base.transpose().matmul(&base).unwrap();
        let mut dir = vec![0.0; n];
        rng.fill_normal(&mut dir);
        let nd = norm2(&dir);
        dir.iter_mut().for_each(|x| *x /= nd);
        let spike = 3.0 * a.frobenius_norm();
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, a.get(i, j) + spike * dir[i] * dir[j]);
            }
        }
        let eig = sym_eigen(&a, SYM_EIGEN_TOL).unwrap();
        let l = eig.spectrum.eigenvalues();
        assert!(l[1] <= 0.9 * l[0], "gap construction failed");

        let est = power_method_norm(|v| a.matvec(v).unwrap(), n, 2000, 1e-12, &mut rng).unwrap();
        assert!(
            (est.value - l[0]).abs() <= 1e-6 * l[0],
            "trial {trial}: {} vs {}",
            est.value,
            l[0]
        );
    }
}

#[test]
fn pinv_solution_has_minimum_norm() {
    // Among least-squares solutions x + z (z in the null space), the
    // pseudo-inverse solution has the smallest norm.
    let mut rng = RngStream::new(1003, 0);
    for _ in 0..10 {
        let n = 3;
        let d = 9;
        let mut data = vec![0.0; n * d];
        rng.fill_normal(&mut data);
        let b = DenseMatrix::new(n, d, data).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x = gram_pinv_solve(&b, &y, DEFAULT_RANK_TOL).unwrap();

        // Residual orthogonality: B^T (B x - y) = 0.
        let bx = b.matvec(&x).unwrap();
        let resid: Vec<f64> = bx.iter().zip(&y).map(|(a, t)| a - t).collect();
        for v in b.vecmat(&resid).unwrap() {
            assert!(v.abs() < 1e-8);
        }

        // Project a random vector onto the null space of B and perturb.
        let mut z = vec![0.0; d];
        rng.fill_normal(&mut z);
        let bz = b.matvec(&z).unwrap();
        let correction = gram_pinv_solve(&b, &bz, DEFAULT_RANK_TOL).unwrap();
        let null_z: Vec<f64> = z.iter().zip(&correction).map(|(a, c)| a - c).collect();
        let bnz = b.matvec(&null_z).unwrap();
        assert!(norm2(&bnz) < 1e-8, "null-space projection failed");
        if norm2(&null_z) > 1e-6 {
            let perturbed: Vec<f64> = x.iter().zip(&null_z).map(|(a, b)| a + b).collect();
            assert!(
                norm2(&perturbed) > norm2(&x),
                "adding a null-space component must increase the norm"
            );
        }
    }
}

#[test]
fn rng_streams_are_bit_identical_across_runs() {
    let draws = |seed: u64, stream: u64| -> Vec<u64> {
        let mut rng = RngStream::new(seed, stream);
        (0..256).map(|_| rng.next_u64()).collect()
    };
    assert_eq!(draws(7, 7), draws(7, 7));
    assert_ne!(draws(7, 7), draws(7, 8));
    assert_ne!(draws(7, 7), draws(8, 7));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sym_eigen_reconstructs_random_small(entries in prop::collection::vec(-10.0f64..10.0, 16)) {
        let mut a = DenseMatrix::zeros(4, 4);
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                a.set(i, j, entries[k]);
                a.set(j, i, entries[k]);
                k += 1;
            }
        }
        let e = sym_eigen(&a, SYM_EIGEN_TOL).unwrap();
        for idx in 0..4 {
            let v = e.vector(idx);
            let av = a.matvec(&v).unwrap();
            let l = e.spectrum.eigenvalues()[idx];
            let scale = e.spectrum.eigenvalues()[0].abs().max(1.0);
            for r in 0..4 {
                prop_assert!((av[r] - l * v[r]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn pinv_residual_orthogonality_random(seed in 0u64..5000) {
        let mut rng = RngStream::new(seed, 3);
        let n = 2 + (seed % 3) as usize;
        let d = n + 1 + (seed % 5) as usize;
        let mut data = vec![0.0; n * d];
        rng.fill_normal(&mut data);
        let b = DenseMatrix::new(n, d, data).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x = gram_pinv_solve(&b, &y, DEFAULT_RANK_TOL).unwrap();
        let bx = b.matvec(&x).unwrap();
        let resid: Vec<f64> = bx.iter().zip(&y).map(|(a, t)| a - t).collect();
        let back = b.vecmat(&resid).unwrap();
        let scale = 1.0 + dot(&y, &y).sqrt();
        for v in back {
            prop_assert!(v.abs() < 1e-8 * scale);
        }
    }
}
