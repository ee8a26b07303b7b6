//! Free-support Wasserstein barycenter under squared Euclidean ground cost,
//! and the discrete displacement (McCann) interpolant.

use super::solve_exact;
use crate::linalg::sq_dist_matrix;
use crate::{Coupling, DiscreteMeasure, Histogram, OtError, Result};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Free-support barycenter of `measures` with mixing weights `lambdas`.
///
/// Block-coordinate descent: transport plans by exact linear OT, support
/// update by the weighted plan average. Barycenter weights stay uniform
/// (`1/k`); the weight-update variant is out of scope. `fixed_support`, when
/// given, must have `k` rows and is used as the initial support; otherwise
/// the support is seeded deterministically from the input points.
pub fn wasserstein_barycenter(
    measures: &[DiscreteMeasure],
    lambdas: &Histogram,
    k: usize,
    fixed_support: Option<&Array2<f64>>,
) -> Result<DiscreteMeasure> {
    wasserstein_barycenter_detailed(measures, lambdas, k, fixed_support).map(|(m, _)| m)
}

/// As [`wasserstein_barycenter`], also returning the objective value after
/// each outer sweep (non-increasing).
pub fn wasserstein_barycenter_detailed(
    measures: &[DiscreteMeasure],
    lambdas: &Histogram,
    k: usize,
    fixed_support: Option<&Array2<f64>>,
) -> Result<(DiscreteMeasure, Vec<f64>)> {
    if measures.is_empty() {
        return Err(OtError::BadParams("need at least one input measure".into()));
    }
    if lambdas.len() != measures.len() {
        return Err(OtError::LengthMismatch {
            expected: measures.len(),
            actual: lambdas.len(),
        });
    }
    if k == 0 {
        return Err(OtError::BadParams("k must be >= 1".into()));
    }
    let dim = measures[0].dim();
    if measures.iter().any(|m| m.dim() != dim) {
        return Err(OtError::ShapeMismatch("all measures must share a dimension".into()));
    }

    let mut support = match fixed_support {
        Some(s) => {
            if s.nrows() != k || s.ncols() != dim {
                return Err(OtError::ShapeMismatch(format!(
                    "initial support {}x{} vs k={} dim={}",
                    s.nrows(),
                    s.ncols(),
                    k,
                    dim
                )));
            }
            s.to_owned()
        }
        None => seed_support(measures, k, dim),
    };
    let bary_weights = Histogram::uniform(k);

    let mut objectives = Vec::new();
    let mut prev_obj = f64::INFINITY;
    for _sweep in 0..100 {
        // Plan step: K independent exact solves.
        let solves: Vec<_> = measures
            .par_iter()
            .map(|m| {
                let cost = sq_dist_matrix(&support, m.support());
                solve_exact(&cost, &bary_weights, m.weights())
            })
            .collect::<Result<Vec<_>>>()?;
        let objective: f64 = solves
            .iter()
            .zip(lambdas.as_slice())
            .map(|(s, &l)| l * s.cost)
            .sum();
        objectives.push(objective);

        // Support step: X = Diag(1/a) sum_i lambda_i pi_i Y_i.
        let mut next = Array2::<f64>::zeros((k, dim));
        for (sol, (&l, m)) in solves.iter().zip(lambdas.as_slice().iter().zip(measures)) {
            next = next + sol.coupling.plan().dot(m.support()) * l;
        }
        for mut row in next.rows_mut() {
            row.mapv_inplace(|v| v * k as f64);
        }
        support = next;

        if prev_obj.is_finite() {
            let decrease = prev_obj - objective;
            if decrease.abs() <= 1e-7 * prev_obj.abs().max(1e-12) {
                break;
            }
        }
        prev_obj = objective;
    }
    Ok((DiscreteMeasure::uniform(support), objectives))
}

fn seed_support(measures: &[DiscreteMeasure], k: usize, dim: usize) -> Array2<f64> {
    let total: usize = measures.iter().map(|m| m.len()).sum();
    let mut all = Array2::zeros((total, dim));
    let mut row = 0;
    for m in measures {
        for r in m.support().rows() {
            all.row_mut(row).assign(&r);
            row += 1;
        }
    }
    Array2::from_shape_fn((k, dim), |(j, c)| all[[(j * total) / k, c]])
}

/// Displacement interpolation of a coupling at time `t`: one atom
/// `(1-t) x_i + t y_j` per plan entry above 1e-15, weights renormalized.
pub fn mccann_interpolate(
    coupling: &Coupling,
    xs: &Array2<f64>,
    ys: &Array2<f64>,
    t: f64,
) -> Result<DiscreteMeasure> {
    let (n, m) = coupling.shape();
    if xs.nrows() != n || ys.nrows() != m || xs.ncols() != ys.ncols() {
        return Err(OtError::ShapeMismatch(format!(
            "coupling {}x{} vs supports {}x{} / {}x{}",
            n,
            m,
            xs.nrows(),
            xs.ncols(),
            ys.nrows(),
            ys.ncols()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(OtError::BadParams(format!("t={t} outside [0, 1]")));
    }
    let dim = xs.ncols();
    let mut points = Vec::new();
    let mut masses = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let mass = coupling.plan()[[i, j]];
            if mass > 1e-15 {
                let mut pt = Array1::zeros(dim);
                for c in 0..dim {
                    pt[c] = (1.0 - t) * xs[[i, c]] + t * ys[[j, c]];
                }
                points.push(pt);
                masses.push(mass);
            }
        }
    }
    let mut support = Array2::zeros((points.len(), dim));
    for (r, pt) in points.iter().enumerate() {
        support.row_mut(r).assign(pt);
    }
    let weights = Histogram::new(Array1::from_vec(masses))?;
    DiscreteMeasure::new(support, weights)
}
