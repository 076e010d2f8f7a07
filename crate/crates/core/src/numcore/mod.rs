//! Numeric kernels shared by every other module.

mod eig;
mod matrix;
mod real;
mod rng;
mod stats;

pub use eig::{jacobi_eig, symmetric_eig, tridiagonal_ql_eig, SymmetricEigen, JACOBI_MAX_DIM};
pub use matrix::Matrix;
pub use real::{Precision, Real};
pub use rng::{rng_gaussian, splitmix64, Rng};
pub use stats::{
    inverse_normal_cdf, ks_gaussian, ks_standard_normal, mean, normal_cdf, std_dev, KS_MIN_SAMPLES,
};
