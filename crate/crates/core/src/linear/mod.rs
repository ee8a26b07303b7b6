//! Linear (Kantorovich) optimal transport: exact simplex solver, Sinkhorn
//! with log-stabilization, 1D and Gaussian closed forms, free-support
//! barycenters, and displacement interpolation.

mod barycenter;
mod gaussian;
mod one_d;
mod simplex;
mod sinkhorn;

pub use barycenter::{mccann_interpolate, wasserstein_barycenter, wasserstein_barycenter_detailed};
pub use gaussian::gaussian_w2;
pub use one_d::{monotone_1d_cost, wasserstein_1d};
pub use simplex::{is_monge, north_west_corner, solve_exact};
pub use sinkhorn::{sinkhorn, sinkhorn_divergence, sinkhorn_with_reference, SinkhornParams};

/// Entropy `H(pi) = -sum pi (log pi - 1)` of a plan, the regularizer of the
/// entropic problem. Useful as a blur diagnostic.
pub fn entropy_of(plan: &ndarray::Array2<f64>) -> f64 {
    sinkhorn::entropy(plan)
}

use crate::Coupling;
use ndarray::Array1;

/// Solution of a linear transport problem.
///
/// `duals` carries the Kantorovich potentials when the solver produces them:
/// the exact solver always does, Sinkhorn returns its entropic potentials,
/// and the 1D monotone solver returns `None`.
#[derive(Debug, Clone)]
pub struct OtSolution {
    pub coupling: Coupling,
    pub cost: f64,
    pub iterations: usize,
    pub duals: Option<(Array1<f64>, Array1<f64>)>,
}
