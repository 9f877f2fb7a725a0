// Index loops mirror the matrix subscripts they implement.
#![allow(clippy::needless_range_loop)]

//! Hybrid inexact block coordinate descent (HiBCD) for coupled structured
//! matrix factorization, applied to hyperspectral super-resolution.
//!
//! The crate is organized around a generic multi-block solver and one
//! concrete problem family:
//!
//! - [`linalg`]: dense matrix kernels, power-method eigensolvers, the
//!   spectral/spatial decimation operators `F` and `G`.
//! - [`proxlo`]: proximal operators and linear-optimization oracles for the
//!   box, the column-wise unit simplex, and the row-wise nuclear-norm ball.
//! - [`engine`]: the block-coordinate solver with per-block FPG or FW
//!   updates, descent certification, and FW-gap stationarity tracking.
//! - [`cosmf`]: the coupled factorization objective, its block gradients and
//!   step-size rules, and the end-to-end `solve` entry point.
//! - [`sensing`]: synthetic scene generation (ground truth, decimation,
//!   SNR-controlled noise).
//! - [`metrics`]: SAM / PSNR / ERGAS recovery metrics and the bicubic
//!   naive-interpolation baseline.

pub mod cosmf;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod proxlo;
pub mod sensing;

pub use error::Error;
pub use linalg::{DenseMatrix, SimplexNullBasis, SpatialDecimationOperator};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
