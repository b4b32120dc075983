//! Dense linear algebra and randomness substrate: row-major matrices, a
//! cyclic-Jacobi symmetric eigensolver, power iteration, the Gram-trick
//! pseudo-inverse, and a counter-based splittable RNG.

pub mod eigen;
pub mod matrix;
pub mod pinv;
pub mod power;
pub mod rng;

pub use eigen::{sym_eigen, Spectrum, SymEigen, DEFAULT_RANK_TOL, SYM_EIGEN_TOL};
pub use matrix::{axpy, dist2, dot, norm2, sub_vec, DenseMatrix};
pub use pinv::{gram_pinv_solve, GramSolver};
pub use power::{power_method_norm, PowerEstimate};
pub use rng::RngStream;
