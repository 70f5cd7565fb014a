//! Multiple kernel k-means clustering.
//!
//! The centerpiece is [`cluster::kcd_mkkm`], which learns kernel weights
//! through an m×m representation matrix `Y` regularized by the kernel
//! correlation matrix `M` (Frobenius inner products) and the kernel
//! dissimilarity matrix `D` (entrywise Manhattan distances). The objective
//!
//! ```text
//! Tr(K_Y (I - H Hᵀ)) + α wᵀ M w + β Tr(Dᵀ Y),   w = Y·1/m,   K_Y = Σ w_p² K_p
//! ```
//!
//! is minimized by alternating a top-k eigendecomposition for `H` with a
//! convex QP over column-stochastic `Y`.
//!
//! The crate also ships the baselines (KKM, A-MKKM, SB-KKM, MKKM, MKKM-MR),
//! external clustering metrics, Friedman/Nemenyi rank statistics, and the
//! file formats and experiment harness used by the `mkkm` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod error;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod relations;
pub mod simplexqp;
pub mod spectral;
pub mod stats;
mod sum;

pub use error::{Error, Result};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
