//! Spectral norm of the training-loss Hessian restricted to the trainable
//! coordinates, estimated by power iteration with central-difference
//! Hessian-vector products
//!     H v ~= (grad L(theta + eps v) - grad L(theta - eps v)) / (2 eps).
//! Because the probe only needs the exact gradient, it works for any layer
//! parameterization without second-derivative code.

use crate::error::Result;
use crate::nn::model::MlpModel;
use crate::nn::task::{Dataset, SyntheticTask};
use crate::nn::train::{trainable_grad, LossKind};
use crate::tensor::{norm2, power_method_norm, PowerEstimate, RngStream};

/// Finite-difference step for a unit direction: sqrt(machine eps) scaled by
/// the parameter magnitude, balancing truncation against roundoff.
fn fd_step(theta_norm: f64) -> f64 {
    f64::EPSILON.sqrt() * (1.0 + theta_norm)
}

/// Power-method estimate of ||H||_2 on an explicit dataset and loss.
pub fn hessian_spectral_norm_on(
    model: &mut MlpModel,
    data: &Dataset,
    loss_kind: LossKind,
    iters: usize,
    tol: f64,
    rng: &mut RngStream,
) -> Result<PowerEstimate> {
    let dim = model.trainable_len();
    if dim == 0 {
        return Ok(PowerEstimate {
            value: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    let theta0 = model.trainable_vector();
    let eps = fd_step(norm2(&theta0));

    let mut hvp = |v: &[f64]| -> Vec<f64> {
        // v arrives unit-norm from the power iteration.
        let mut shifted = theta0.clone();
        for (s, vi) in shifted.iter_mut().zip(v) {
            *s += eps * vi;
        }
        model.set_trainable_vector(&shifted).expect("length fixed");
        let gp = trainable_grad(model, &data.inputs, &data.targets, loss_kind)
            .expect("gradient on fixed dims");
        for ((s, t), vi) in shifted.iter_mut().zip(&theta0).zip(v) {
            *s = t - eps * vi;
        }
        model.set_trainable_vector(&shifted).expect("length fixed");
        let gm = trainable_grad(model, &data.inputs, &data.targets, loss_kind)
            .expect("gradient on fixed dims");
        gp.iter()
            .zip(&gm)
            .map(|(p, m)| (p - m) / (2.0 * eps))
            .collect()
    };

    let estimate = power_method_norm(&mut hvp, dim, iters, tol, rng);
    model.set_trainable_vector(&theta0)?;
    estimate
}

/// The sandbox probe: Hessian spectral norm of the cross-entropy training
/// loss on the task's train split.
pub fn hessian_spectral_norm(
    model: &mut MlpModel,
    task: &SyntheticTask,
    iters: usize,
    tol: f64,
    rng: &mut RngStream,
) -> Result<PowerEstimate> {
    let train = task.train_set();
    hessian_spectral_norm_on(model, &train, LossKind::CrossEntropy, iters, tol, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{attach_peft, Activation, LayerSpec, MlpModel};
    use crate::nn::task::Targets;
    use crate::tensor::{dot, sym_eigen, DenseMatrix, SYM_EIGEN_TOL};

    #[test]
    fn zero_trainable_coordinates_give_zero() {
        let mut rng = RngStream::new(50, 0);
        let model = MlpModel::new(&[4, 3], Activation::Relu, &mut rng).unwrap();
        let mut frozen = attach_peft(&model, &[LayerSpec::Frozen], &mut rng).unwrap();
        let data = Dataset {
            inputs: DenseMatrix::identity(4),
            targets: Targets::Labels(vec![0, 1, 2, 0]),
        };
        let est = hessian_spectral_norm_on(
            &mut frozen,
            &data,
            LossKind::CrossEntropy,
            50,
            1e-8,
            &mut rng,
        )
        .unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn least_squares_head_matches_gram_eigenvalue() {
        // Single linear layer trained with squared error: the Hessian over
        // the weights is (1/n) X^T X (per output), so its norm is
        // (1/n) lambda_1(X^T X).
        let mut rng = RngStream::new(51, 0);
        let n = 12;
        let d = 5;
        let mut data = vec![0.0; n * d];
        rng.fill_normal(&mut data);
        let x = DenseMatrix::new(n, d, data).unwrap();
        let targets: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let dataset = Dataset {
            inputs: x.clone(),
            targets: Targets::Values(DenseMatrix::new(n, 1, targets).unwrap()),
        };

        // Dense increment on the weights only: the bias stays frozen, so the
        // trainable Hessian is exactly (1/n) X^T X.
        let base = MlpModel::new(&[d, 1], Activation::Relu, &mut rng).unwrap();
        let mut model = attach_peft(&base, &[LayerSpec::Full], &mut rng).unwrap();
        let est = hessian_spectral_norm_on(
            &mut model,
            &dataset,
            LossKind::SquaredError,
            500,
            1e-12,
            &mut rng,
        )
        .unwrap();

        let gram = x.transpose().row_gram(); // X^T X as row_gram of X^T
        let lambda1 = sym_eigen(&gram, SYM_EIGEN_TOL).unwrap().spectrum.lambda1();
        let expected = lambda1 / n as f64;
        assert!(
            (est.value - expected).abs() <= 1e-4 * expected,
            "{} vs {expected}",
            est.value
        );
    }

    #[test]
    fn two_parameter_model_matches_dense_fd_hessian() {
        // 1 -> 1 linear layer with bias: exactly two trainable parameters.
        let mut rng = RngStream::new(52, 0);
        let mut model = MlpModel::new(&[1, 1], Activation::Relu, &mut rng).unwrap();
        let inputs = DenseMatrix::new(4, 1, vec![0.5, -1.0, 2.0, 1.5]).unwrap();
        let targets = DenseMatrix::new(4, 1, vec![1.0, 0.0, -1.0, 2.0]).unwrap();
        let data = Dataset {
            inputs,
            targets: Targets::Values(targets),
        };

        let est = hessian_spectral_norm_on(
            &mut model,
            &data,
            LossKind::SquaredError,
            500,
            1e-12,
            &mut rng,
        )
        .unwrap();

        // Dense 2x2 Hessian by finite differences of the gradient.
        let theta0 = model.trainable_vector();
        let h = 1e-5;
        let mut hess = DenseMatrix::zeros(2, 2);
        for j in 0..2 {
            let mut tp = theta0.clone();
            let mut tm = theta0.clone();
            tp[j] += h;
            tm[j] -= h;
            model.set_trainable_vector(&tp).unwrap();
            let gp = trainable_grad(&model, &data.inputs, &data.targets, LossKind::SquaredError)
                .unwrap();
            model.set_trainable_vector(&tm).unwrap();
            let gm = trainable_grad(&model, &data.inputs, &data.targets, LossKind::SquaredError)
                .unwrap();
            for i in 0..2 {
                hess.set(i, j, (gp[i] - gm[i]) / (2.0 * h));
            }
        }
        model.set_trainable_vector(&theta0).unwrap();
        let dense_top = sym_eigen(&hess, 1e-10).unwrap().spectrum.lambda1();
        assert!(
            (est.value - dense_top).abs() <= 1e-3 * dense_top,
            "{} vs {dense_top}",
            est.value
        );
    }

    #[test]
    fn hvp_is_symmetric_in_its_arguments() {
        let mut rng = RngStream::new(53, 0);
        let model = MlpModel::new(&[3, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let mut attached = attach_peft(
            &model,
            &[
                LayerSpec::Masked {
                    p: 0.5,
                    mode: crate::masking::MaskMode::Bernoulli,
                },
                LayerSpec::Full,
            ],
            &mut rng,
        )
        .unwrap();
        let mut inputs = vec![0.0; 10 * 3];
        rng.fill_normal(&mut inputs);
        let data = Dataset {
            inputs: DenseMatrix::new(10, 3, inputs).unwrap(),
            targets: Targets::Labels(vec![0, 1, 0, 1, 1, 0, 0, 1, 0, 1]),
        };

        let dim = attached.trainable_len();
        let theta0 = attached.trainable_vector();
        let eps = super::fd_step(norm2(&theta0));
        let mut hvp = |v: &[f64]| -> Vec<f64> {
            let mut shifted = theta0.clone();
            for (s, vi) in shifted.iter_mut().zip(v) {
                *s += eps * vi;
            }
            attached.set_trainable_vector(&shifted).unwrap();
            let gp =
                trainable_grad(&attached, &data.inputs, &data.targets, LossKind::CrossEntropy)
                    .unwrap();
            for ((s, t), vi) in shifted.iter_mut().zip(&theta0).zip(v) {
                *s = t - eps * vi;
            }
            attached.set_trainable_vector(&shifted).unwrap();
            let gm =
                trainable_grad(&attached, &data.inputs, &data.targets, LossKind::CrossEntropy)
                    .unwrap();
            gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * eps)).collect()
        };

        let mut u = vec![0.0; dim];
        let mut w = vec![0.0; dim];
        let mut urng = RngStream::new(54, 0);
        urng.fill_normal(&mut u);
        urng.fill_normal(&mut w);
        let nu = norm2(&u);
        let nw = norm2(&w);
        u.iter_mut().for_each(|x| *x /= nu);
        w.iter_mut().for_each(|x| *x /= nw);

        let hu = hvp(&u);
        let hw = hvp(&w);
        let lhs = dot(&w, &hu);
        let rhs = dot(&u, &hw);
        assert!(
            (lhs - rhs).abs() <= 1e-5 * (1.0 + lhs.abs()),
            "<w, Hu> = {lhs}, <u, Hw> = {rhs}"
        );
    }
}
