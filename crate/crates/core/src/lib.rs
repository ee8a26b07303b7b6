//! Optimal transport solvers for incomparable spaces.
//!
//! This crate implements the linear (Kantorovich) problem with exact and
//! entropic solvers, the Gromov-Wasserstein (GW) family for comparing
//! metric-measure spaces, Fused Gromov-Wasserstein for labeled graphs,
//! sliced and rotation-invariant sliced GW, block-coordinate reformulations
//! of GW for Euclidean point clouds, the linear Gromov-Monge closed form
//! between Gaussians, and CO-Optimal Transport over raw data matrices with
//! co-clustering on top.
//!
//! Design notes:
//! - All solvers are deterministic given their inputs (and seeds, where an
//!   RNG is involved). Internal parallelism uses fixed reduction orders.
//! - Exact linear programs go through one transportation-simplex
//!   implementation with Bland pivoting, so tie-breaking is shared by every
//!   caller (Frank-Wolfe directions, barycenter steps, DC iterations, ...).
//! - Matrices are `ndarray` throughout; `nalgebra` backs the symmetric
//!   eigendecompositions and QR factorizations.

pub mod coot;
pub mod error;
pub mod euclidean;
pub mod fgw;
pub mod gromov;
pub mod linalg;
pub mod linear;
pub mod measures;
pub mod sliced;

pub use error::OtError;
pub use measures::{
    check_coupling, make_histogram, product_coupling, Coupling, DataMatrix, DiscreteMeasure,
    Features, GaussianMeasure, Histogram, StructuredObject,
};

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, OtError>;
