//! Dense and structured linear-algebra kernels.

mod basis;
pub mod eigen;
mod matrix;
mod operators;
mod power;

pub use basis::{simplex_null_basis, SimplexNullBasis};
pub use matrix::{vec_dot, vec_norm, DenseMatrix};
pub use operators::{build_band_average_f, build_spatial_operator, SpatialDecimationOperator};
pub use power::{
    power_iteration_lambda_max, principal_singular_pair, DenseSymOp, FnSymOp, PowerOutcome,
    SingularPair, SymmetricOp,
};
