use crate::error::{Error, Result};
use crate::tensor::matrix::{dot, norm2};
use crate::tensor::rng::RngStream;

/// Outcome of a power iteration: the dominant |eigenvalue| estimate, whether
/// the Rayleigh quotient converged to the requested relative tolerance, and
/// how many applications of the operator were used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Estimates the largest absolute eigenvalue of a self-adjoint operator on
/// R^dim by power iteration with a random start vector.
///
/// The caller guarantees self-adjointness. Convergence is declared when
/// successive Rayleigh quotients agree to `tol` relatively; otherwise the
/// last quotient is returned with `converged = false`. If the iterate lands
/// in the operator's null space the start vector is re-randomized once; a
/// second dead iterate means the operator is (numerically) zero.
pub fn power_method_norm<F>(
    mut apply: F,
    dim: usize,
    iters: usize,
    tol: f64,
    rng: &mut RngStream,
) -> Result<PowerEstimate>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return Err(Error::invalid("power_method_norm: dim must be positive"));
    }
    if iters == 0 {
        return Err(Error::invalid("power_method_norm: iters must be >= 1"));
    }

    let fresh = |rng: &mut RngStream| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        rng.fill_normal(&mut v);
        let n = norm2(&v);
        v.iter_mut().for_each(|x| *x /= n);
        v
    };

    let mut v = fresh(rng);
    let mut restarted = false;
    let mut rayleigh = 0.0;
    let mut have_prev = false;

    for k in 1..=iters {
        let w = apply(&v);
        if w.len() != dim {
            return Err(Error::invalid(
                "power_method_norm: operator changed dimension",
            ));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("power_method_norm operator output".into()));
        }
        let quotient = dot(&v, &w); // v is unit norm
        let w_norm = norm2(&w);
        if w_norm == 0.0 {
            if restarted {
                return Ok(PowerEstimate {
                    value: 0.0,
                    converged: true,
                    iterations: k,
                });
            }
            restarted = true;
            v = fresh(rng);
            have_prev = false;
            continue;
        }
        if have_prev && (quotient - rayleigh).abs() <= tol * quotient.abs().max(f64::MIN_POSITIVE) {
            return Ok(PowerEstimate {
                value: quotient.abs(),
                converged: true,
                iterations: k,
            });
        }
        rayleigh = quotient;
        have_prev = true;
        v = w.iter().map(|x| x / w_norm).collect();
    }

    Ok(PowerEstimate {
        value: rayleigh.abs(),
        converged: false,
        iterations: iters,
    })
}
