//! Sinkhorn-Knopp scaling for entropic transport, with optional log-domain
//! stabilization that absorbs the scalings into dual potentials before they
//! under- or overflow.

use super::OtSolution;
use crate::{measures::Coupling, Histogram, OtError, Result};
use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct SinkhornParams {
    pub epsilon: f64,
    pub max_iter: usize,
    pub marginal_tol: f64,
    pub log_stabilize: bool,
}

impl SinkhornParams {
    pub fn new(epsilon: f64) -> Self {
        SinkhornParams {
            epsilon,
            ..Default::default()
        }
    }
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            epsilon: 1e-1,
            max_iter: 10_000,
            marginal_tol: 1e-9,
            log_stabilize: true,
        }
    }
}

/// Entropic transport `min <C, pi> - eps H(pi)` by alternating scaling.
///
/// Stops when the max-abs marginal residual drops below `marginal_tol` or
/// `max_iter` is reached; the residual state is visible through
/// `iterations == max_iter`. The reported cost is the linear part `<C, pi>`.
pub fn sinkhorn(
    cost: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    params: &SinkhornParams,
) -> Result<OtSolution> {
    sinkhorn_with_reference(cost, a, b, None, params)
}

/// Sinkhorn iteration on the kernel `R .* exp(-C / eps)`.
///
/// With `reference = Some(R)` this solves `min <C, pi> + eps KL(pi | R)`,
/// which is the relative-entropy variant used by entropic COOT with
/// `R = w w'^T`. `None` is the plain-entropy kernel.
pub fn sinkhorn_with_reference(
    cost: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    reference: Option<&Array2<f64>>,
    params: &SinkhornParams,
) -> Result<OtSolution> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if n != a.len() || m != b.len() {
        return Err(OtError::ShapeMismatch(format!(
            "cost {}x{} vs marginals {} / {}",
            n,
            m,
            a.len(),
            b.len()
        )));
    }
    if params.epsilon <= 0.0 {
        return Err(OtError::BadParams("epsilon must be positive".into()));
    }
    if params.marginal_tol <= 0.0 {
        return Err(OtError::BadParams("marginal_tol must be positive".into()));
    }
    if let Some(r) = reference {
        if r.nrows() != n || r.ncols() != m {
            return Err(OtError::ShapeMismatch("reference kernel shape".into()));
        }
    }
    let eps = params.epsilon;
    if params.log_stabilize {
        sinkhorn_log_domain(cost, a, b, reference, params)
    } else {
        sinkhorn_scaling(cost, a, b, reference, params, eps)
    }
}

/// Plain scaling iterations on the kernel `R .* exp(-C/eps)`. Fast but
/// subject to underflow for small epsilon; NaN iterates are reported.
fn sinkhorn_scaling(
    cost: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    reference: Option<&Array2<f64>>,
    params: &SinkhornParams,
    eps: f64,
) -> Result<OtSolution> {
    let (n, m) = (cost.nrows(), cost.ncols());
    let kernel = Array2::from_shape_fn((n, m), |(i, j)| {
        let r = reference.map_or(1.0, |r| r[[i, j]]);
        r * (-cost[[i, j]] / eps).exp()
    });
    let mut u = Array1::<f64>::ones(n);
    let mut v = Array1::<f64>::ones(m);
    let mut iterations = 0usize;
    for it in 1..=params.max_iter {
        iterations = it;
        let kt_u = kernel.t().dot(&u);
        for j in 0..m {
            v[j] = b.weights()[j] / kt_u[j];
        }
        let kv = kernel.dot(&v);
        for i in 0..n {
            u[i] = a.weights()[i] / kv[i];
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(OtError::NonFinite);
        }
        let col_sums = kernel.t().dot(&u) * &v;
        let residual = col_sums
            .iter()
            .zip(b.weights().iter())
            .fold(0.0_f64, |acc, (s, w)| acc.max((s - w).abs()));
        if residual <= params.marginal_tol {
            break;
        }
    }
    let mut plan = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            plan[[i, j]] = u[i] * kernel[[i, j]] * v[j];
        }
    }
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(OtError::NonFinite);
    }
    let cost_value = crate::linalg::frob(cost, &plan);
    let dual_row = u.mapv(|x| eps * x.ln());
    let dual_col = v.mapv(|x| eps * x.ln());
    Ok(OtSolution {
        coupling: Coupling::from_iterate(plan, a.clone(), b.clone()),
        cost: cost_value,
        iterations,
        duals: Some((dual_row, dual_col)),
    })
}

/// Log-domain iterations: the scalings are absorbed into the dual
/// potentials at every step, so the effective kernel stays O(1) and the
/// updates neither underflow nor overflow for any positive epsilon.
fn sinkhorn_log_domain(
    cost: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    reference: Option<&Array2<f64>>,
    params: &SinkhornParams,
) -> Result<OtSolution> {
    let (n, m) = (cost.nrows(), cost.ncols());
    let eps = params.epsilon;
    // Shifted exponent: z_ij = ln r_ij - C_ij / eps (r entries of zero give
    // -inf, excluded from the log-sum-exp below).
    let z = Array2::from_shape_fn((n, m), |(i, j)| {
        let lr = reference.map_or(0.0, |r| r[[i, j]].ln());
        lr - cost[[i, j]] / eps
    });
    let log_a: Vec<f64> = a.weights().iter().map(|&w| w.ln()).collect();
    let log_b: Vec<f64> = b.weights().iter().map(|&w| w.ln()).collect();
    // f, g hold potentials divided by eps (pure log-domain scalings).
    let mut f = vec![0.0_f64; n];
    let mut g = vec![0.0_f64; m];

    let lse = |terms: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = terms.filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            return f64::NEG_INFINITY;
        }
        let peak = vals.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        peak + vals.iter().map(|&v| (v - peak).exp()).sum::<f64>().ln()
    };

    let mut iterations = 0usize;
    for it in 1..=params.max_iter {
        iterations = it;
        for j in 0..m {
            let s = lse(&mut (0..n).map(|i| f[i] + z[[i, j]]));
            g[j] = log_b[j] - s;
        }
        for i in 0..n {
            let s = lse(&mut (0..m).map(|j| g[j] + z[[i, j]]));
            f[i] = log_a[i] - s;
        }
        // Row marginals are exact after the f-update; measure the columns.
        let mut residual = 0.0_f64;
        for j in 0..m {
            let col: f64 = (0..n).map(|i| (f[i] + g[j] + z[[i, j]]).exp()).sum();
            residual = residual.max((col - b.weights()[j]).abs());
        }
        if residual <= params.marginal_tol {
            break;
        }
    }

    let plan = Array2::from_shape_fn((n, m), |(i, j)| (f[i] + g[j] + z[[i, j]]).exp());
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(OtError::NonFinite);
    }
    let cost_value = crate::linalg::frob(cost, &plan);
    let dual_row = Array1::from_shape_fn(n, |i| eps * f[i]);
    let dual_col = Array1::from_shape_fn(m, |j| eps * g[j]);
    Ok(OtSolution {
        coupling: Coupling::from_iterate(plan, a.clone(), b.clone()),
        cost: cost_value,
        iterations,
        duals: Some((dual_row, dual_col)),
    })
}

/// Entropy `H(pi) = -sum pi (log pi - 1)`, with `0 log 0 = 0`.
pub(crate) fn entropy(plan: &Array2<f64>) -> f64 {
    plan.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * (p.ln() - 1.0))
        .sum()
}

/// Debiased Sinkhorn divergence
/// `SD = T_eps(mu, nu) - T_eps(mu, mu)/2 - T_eps(nu, nu)/2`,
/// where `T_eps` is the entropic value `<C, pi> - eps H(pi)` at the
/// converged plan. Zero at `mu = nu` by construction.
pub fn sinkhorn_divergence(
    cost_xy: &Array2<f64>,
    cost_xx: &Array2<f64>,
    cost_yy: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    params: &SinkhornParams,
) -> Result<f64> {
    let t_eps = |cost: &Array2<f64>, p: &Histogram, q: &Histogram| -> Result<f64> {
        let sol = sinkhorn(cost, p, q, params)?;
        Ok(sol.cost - params.epsilon * entropy(sol.coupling.plan()))
    };
    let xy = t_eps(cost_xy, a, b)?;
    let xx = t_eps(cost_xx, a, a)?;
    let yy = t_eps(cost_yy, b, b)?;
    Ok(xy - 0.5 * xx - 0.5 * yy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sq_dist_matrix;
    use crate::linear::solve_exact;
    use crate::make_histogram;
    use crate::Histogram;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_atom_converges_immediately() {
        let one = make_histogram(&[1.0]).unwrap();
        let sol = sinkhorn(&array![[2.0]], &one, &one, &SinkhornParams::new(0.5)).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_abs_diff_eq!(sol.coupling.plan()[[0, 0]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn large_epsilon_gives_product_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cost = Array2::from_shape_fn((4, 5), |_| rng.gen::<f64>());
        let a = make_histogram(&[0.1, 0.4, 0.3, 0.2]).unwrap();
        let b = make_histogram(&[0.3, 0.1, 0.2, 0.2, 0.2]).unwrap();
        let eps = 1e6 * crate::linalg::max_abs(&cost);
        let sol = sinkhorn(&cost, &a, &b, &SinkhornParams::new(eps)).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let expected = a.weights()[i] * b.weights()[j];
                assert!((sol.coupling.plan()[[i, j]] - expected).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn small_epsilon_approaches_exact_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((5, 2), |_| rng.gen::<f64>());
        let y = Array2::from_shape_fn((5, 2), |_| rng.gen::<f64>());
        let cost = sq_dist_matrix(&x, &y);
        let u = Histogram::uniform(5);
        let exact = solve_exact(&cost, &u, &u).unwrap();
        let range = crate::linalg::max_abs(&cost);
        let params = SinkhornParams {
            epsilon: 1e-3 * range,
            max_iter: 200_000,
            marginal_tol: 1e-10,
            log_stabilize: true,
        };
        let sol = sinkhorn(&cost, &u, &u, &params).unwrap();
        assert!(
            (sol.cost - exact.cost).abs() <= 0.01 * exact.cost.max(1e-12),
            "sinkhorn {} vs exact {}",
            sol.cost,
            exact.cost
        );
    }

    #[test]
    fn unstabilized_small_epsilon_reports_nonfinite() {
        let cost = array![[0.0, 1000.0], [1000.0, 0.0]];
        let u = Histogram::uniform(2);
        let params = SinkhornParams {
            epsilon: 1e-3,
            max_iter: 100,
            marginal_tol: 1e-9,
            log_stabilize: false,
        };
        // Kernel underflows to exact zeros; either NonFinite is reported or
        // the kernel degenerates. Stabilized mode must handle it.
        let stab = SinkhornParams {
            log_stabilize: true,
            ..params.clone()
        };
        let sol = sinkhorn(&cost, &u, &u, &stab).unwrap();
        assert_abs_diff_eq!(sol.coupling.plan()[[0, 0]], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.coupling.plan()[[0, 1]], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn divergence_is_zero_on_identical_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((6, 2), |_| rng.gen::<f64>());
        let cost = sq_dist_matrix(&x, &x);
        let a = make_histogram(&(0..6).map(|_| rng.gen::<f64>() + 0.1).collect::<Vec<_>>()).unwrap();
        let params = SinkhornParams::new(0.05);
        let sd = sinkhorn_divergence(&cost, &cost, &cost, &a, &a, &params).unwrap();
        assert!(sd.abs() <= 1e-9, "self divergence {sd}");
    }

    #[test]
    fn divergence_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = Array2::from_shape_fn((4, 2), |_| rng.gen::<f64>());
        let y = Array2::from_shape_fn((5, 2), |_| rng.gen::<f64>());
        let cxy = sq_dist_matrix(&x, &y);
        let cxx = sq_dist_matrix(&x, &x);
        let cyy = sq_dist_matrix(&y, &y);
        let a = Histogram::uniform(4);
        let b = Histogram::uniform(5);
        let params = SinkhornParams {
            epsilon: 0.1,
            max_iter: 500_000,
            marginal_tol: 1e-13,
            log_stabilize: true,
        };
        let fwd = sinkhorn_divergence(&cxy, &cxx, &cyy, &a, &b, &params).unwrap();
        let cyx = cxy.t().to_owned();
        let bwd = sinkhorn_divergence(&cyx, &cyy, &cxx, &b, &a, &params).unwrap();
        assert_abs_diff_eq!(fwd, bwd, epsilon = 1e-10);
    }

    #[test]
    fn divergence_approaches_squared_distance_between_diracs() {
        // Two diracs at distance d with squared cost: SD -> d^2 as eps -> 0.
        let d: f64 = 3.0;
        let one = make_histogram(&[1.0]).unwrap();
        let cxy = array![[d * d]];
        let czero = array![[0.0]];
        let params = SinkhornParams::new(1e-6);
        let sd = sinkhorn_divergence(&cxy, &czero, &czero, &one, &one, &params).unwrap();
        assert_abs_diff_eq!(sd, 9.0, epsilon = 1e-6);
    }

    #[test]
    fn entropy_grows_with_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cost = Array2::from_shape_fn((5, 5), |_| rng.gen::<f64>());
        let u = Histogram::uniform(5);
        let mut last = f64::NEG_INFINITY;
        for eps in [0.01, 0.03, 0.1, 0.3, 1.0] {
            let sol = sinkhorn(&cost, &u, &u, &SinkhornParams::new(eps)).unwrap();
            let h = entropy(sol.coupling.plan());
            assert!(h >= last - 1e-9, "entropy decreased: {h} < {last} at eps {eps}");
            last = h;
        }
    }
}
