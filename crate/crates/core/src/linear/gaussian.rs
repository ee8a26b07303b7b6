//! Closed-form quadratic transport between Gaussian measures.

use crate::linalg::{eigh, sqrtm_psd, sym_fn};
use crate::{GaussianMeasure, OtError, Result};
use ndarray::{Array1, Array2};

/// Squared 2-Wasserstein distance between Gaussians and the optimal linear
/// map: returns `(cost, A, shift)` with `T(x) = A x + shift` pushing `mu`
/// to `nu`, and `cost = |m_mu - m_nu|^2 + tr(S_mu + S_nu - 2 (S_mu^1/2 S_nu
/// S_mu^1/2)^1/2)`.
///
/// Requires `S_mu` strictly positive definite (conditioning threshold 1e-10
/// relative to the largest eigenvalue).
pub fn gaussian_w2(mu: &GaussianMeasure, nu: &GaussianMeasure) -> Result<(f64, Array2<f64>, Array1<f64>)> {
    if mu.dim() != nu.dim() {
        return Err(OtError::ShapeMismatch(format!(
            "dimensions {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let s_mu = mu.covariance();
    let s_nu = nu.covariance();
    let (vals, _) = eigh(s_mu)?;
    let largest = vals[vals.len() - 1].max(1.0);
    if vals[0] <= 1e-10 * largest {
        return Err(OtError::SingularCovariance);
    }

    let root = sqrtm_psd(s_mu)?;
    let inv_root = sym_fn(s_mu, |v| 1.0 / v.max(1e-300).sqrt())?;
    let middle = root.dot(s_nu).dot(&root);
    let middle_root = sqrtm_psd(&middle)?;
    let map = inv_root.dot(&middle_root).dot(&inv_root);

    let mean_diff = nu.mean() - mu.mean();
    let bures_sq = (trace(s_mu) + trace(s_nu) - 2.0 * trace(&middle_root)).max(0.0);
    let cost = mean_diff.dot(&mean_diff) + bures_sq;
    let shift = nu.mean() - &map.dot(mu.mean());
    Ok((cost, map, shift))
}

fn trace(m: &Array2<f64>) -> f64 {
    m.diag().sum()
}
