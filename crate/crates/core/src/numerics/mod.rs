//! Dense linear algebra and keyed randomness shared by the other modules.

mod eigen;
mod linalg;
mod matrix;
mod rng;

pub use eigen::{eigenvalues, power_iteration, spectral_radius, Eigenvalue};
pub use linalg::{cholesky, cholesky_solve, ridge_solve, NormalEquations};
pub use matrix::{argmax, dot, gemm, gemm_slices, norm2, Matrix};
pub use rng::{draw_gaussian, draw_uniform, gaussian, uniform, unit_open_closed, RngStream};
