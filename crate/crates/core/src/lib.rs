//! A laboratory for sparse random-mask fine-tuning: coordinate-list masked
//! updates, the masked linear-regression model with its gradient-descent
//! stability threshold and solution-norm bound, Monte-Carlo eigenvalue
//! concentration checks, a small MLP sandbox with Hessian probes, and a
//! deterministic learning-rate sweep harness.

pub mod concentration;
pub mod error;
pub mod linreg;
pub mod masking;
pub mod nn;
pub mod report;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};
