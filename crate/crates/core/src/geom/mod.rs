//! Fixed-size geometric primitives: vectors, 3x3 matrices with SVD, unit
//! quaternions, rigid transforms, and weighted Kabsch alignment.
//!
//! Everything here is generic over [`crate::scalar::Scalar`]; the crate root
//! exports `f64` aliases for pipeline code.

mod kabsch;
mod matrix;
mod quaternion;
mod transform;
mod vector;

pub use kabsch::kabsch_weighted;
pub use matrix::{jacobi_eigen_symmetric, svd3, Mat3, Svd3};
pub use quaternion::Quaternion;
pub use transform::RigidTransform;
pub use vector::Vector3;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeomError {
    #[error("source/target/weight lengths differ: {sources}/{targets}/{weights}")]
    MismatchedLengths { sources: usize, targets: usize, weights: usize },
    #[error("alignment needs at least 3 point pairs, got {got}")]
    InsufficientPoints { got: usize },
    #[error("weights must be nonnegative")]
    NegativeWeight,
    #[error("weight sum must be positive")]
    NonPositiveWeightSum,
    #[error("weighted points are coincident or collinear; rotation is ambiguous")]
    DegenerateConfiguration,
    #[error("quaternion with zero or non-finite norm")]
    ZeroQuaternion,
}
