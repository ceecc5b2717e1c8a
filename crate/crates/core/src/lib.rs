//! Rank-preserving geometric means of positive semi-definite matrices.
//!
//! A rank-`p` PSD matrix `A = U R² Uᵀ` is a flat `p`-dimensional ellipsoid in
//! `ℝⁿ`: an orthonormal basis `U` of its range and a `p×p` SPD shape `R²`.
//! The mean of several such matrices is formed in three steps: average the
//! ranges on the Grassmann manifold, rotate every ellipsoid into the mean
//! subspace by a rotation of minimal energy, then take a geometric mean of
//! the rotated shapes on the SPD cone. The result keeps rank `p`, where the
//! usual continuity extension of the Ando mean collapses to zero.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`]: symmetric eigendecomposition, compact SVD, SPD matrix functions.
//! - [`spd`]: Ando mean, affine-invariant geodesic and distance, Karcher (`ls`)
//!   and Ando–Li–Mathias (`alm`) means on the SPD cone.
//! - [`grassmann`]: principal angles, aligned representatives, geodesics,
//!   chordal and Karcher subspace means, minimal rotations.
//! - [`fixed_rank`]: the rank-preserving two- and N-matrix means, pseudo-inverse,
//!   the quotient metric and the geometric-mean property checks.
//! - [`filtering`]: a first-order filter on fixed-rank PSD matrices.
//! - [`random`]: seeded generators for test inputs and experiments.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod filtering;
pub mod fixed_rank;
pub mod grassmann;
pub mod linalg;
pub(crate) mod math;
pub mod random;
pub mod spd;

pub use error::{Error, ErrorKind, Result};
pub use filtering::{FilterConfig, FilterState, Trajectory};
pub use fixed_rank::{FixedRankMeanConfig, HorizontalTangent, PsdFixedRank, SubspaceMethod};
pub use grassmann::{AlignedPair, GrassmannMeanConfig, PrincipalAngles};
pub use linalg::{Matrix, SpdMatrix, StiefelBasis, SymMatrix};
pub use spd::{SpdMeanConfig, SpdMeanMethod};
