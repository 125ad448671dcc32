//! Scalar, vector and matrix primitives shared by every other module.

pub mod lambert;
pub mod linalg;
pub mod matrix;
pub mod ode;
pub mod rng;

pub use lambert::{lambert_w0, lambert_w0_branch, lambert_w0_exp};
pub use linalg::{cholesky_solve, determinant, householder_qr, power_iteration, sample_haar_orthogonal};
pub use matrix::{dot, norm, norm_sq, Matrix};
pub use ode::{rk4_endpoint, rk4_integrate, FnSystem, OdeSpec, OdeSystem, Preconditioner};
pub use rng::{sample_gaussian_vector, Rng};
