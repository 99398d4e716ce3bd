//! Dense real-matrix kernels shared by every other module.

mod covariance;
mod eigen;
mod matrix;
mod qr;

pub use covariance::{covariance, Centering, CovarianceAccumulator, CovarianceSummary};
pub use eigen::{jacobi_eig, sym_eig, tridiagonal_eig, EigenDecomposition, JACOBI_MAX_DIM};
pub use matrix::{Matrix, SymmetricMatrix};
pub use qr::{thin_q, thin_qr, RANK_TOL};

pub(crate) use matrix::norm2;
