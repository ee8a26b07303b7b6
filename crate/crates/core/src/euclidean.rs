//! Euclidean reformulations of GW: block-coordinate ascent for the
//! inner-product and squared-Euclidean cases, the 1D inner-product closed
//! form, the linear Gromov-Monge problem between Gaussians, and the shared
//! Stiefel-manifold minimizer.

use crate::gromov::{gw_cost, GwProblem};
use crate::linalg::{eigh, frob, sq_dist_matrix, thin_q};
use crate::linear::{sinkhorn, solve_exact, wasserstein_1d, SinkhornParams};
use crate::{Coupling, Histogram, OtError, Result};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct StiefelOptParams {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_init: f64,
    pub backtrack_ratio: f64,
}

impl Default for StiefelOptParams {
    fn default() -> Self {
        StiefelOptParams {
            max_iter: 200,
            grad_tol: 1e-8,
            step_init: 1.0,
            backtrack_ratio: 0.5,
        }
    }
}

/// Projected-gradient descent on the Stiefel manifold `V_p(R^q)` (matrices
/// `q x p` with orthonormal columns), with QR retraction and Armijo
/// backtracking.
///
/// The default init is the zero-padded identity. Terminates when the
/// Riemannian gradient norm drops below `grad_tol` or `max_iter` is hit;
/// a line search that cannot make progress after 60 backtracks on a
/// non-stationary point is an error.
pub fn stiefel_minimize(
    objective: impl Fn(&Array2<f64>) -> f64,
    gradient: impl Fn(&Array2<f64>) -> Array2<f64>,
    shape: (usize, usize),
    params: &StiefelOptParams,
    init: Option<&Array2<f64>>,
) -> Result<(Array2<f64>, f64)> {
    let (q, p) = shape;
    if p > q {
        return Err(OtError::ShapeMismatch(format!(
            "Stiefel V_p(R^q) needs p <= q, got p={p}, q={q}"
        )));
    }
    if params.backtrack_ratio <= 0.0 || params.backtrack_ratio >= 1.0 {
        return Err(OtError::BadParams("backtrack_ratio must be in (0,1)".into()));
    }
    let mut point = match init {
        Some(b) => {
            if b.nrows() != q || b.ncols() != p {
                return Err(OtError::ShapeMismatch("init shape".into()));
            }
            b.clone()
        }
        None => {
            let mut eye = Array2::zeros((q, p));
            for i in 0..p {
                eye[[i, i]] = 1.0;
            }
            eye
        }
    };
    let mut value = objective(&point);

    for _it in 0..params.max_iter {
        let raw_grad = gradient(&point);
        // Riemannian gradient: project onto the tangent space
        // G - B sym(B^T G).
        let btg = point.t().dot(&raw_grad);
        let sym = (&btg + &btg.t()) * 0.5;
        let rgrad = &raw_grad - &point.dot(&sym);
        let gnorm = rgrad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= params.grad_tol {
            break;
        }

        let mut step = params.step_init;
        let mut accepted = false;
        for _bt in 0..60 {
            let candidate = thin_q(&(&point - &(&rgrad * step)))?;
            let cand_value = objective(&candidate);
            if cand_value <= value - 1e-4 * step * gnorm * gnorm {
                point = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= params.backtrack_ratio;
        }
        if !accepted {
            // Flat to machine precision counts as converged; a genuinely
            // descending direction that cannot be realized is an error.
            let probe = thin_q(&(&point - &(&rgrad * (step / params.backtrack_ratio))))?;
            if (objective(&probe) - value).abs() <= 1e-12 * value.abs().max(1.0) {
                break;
            }
            return Err(OtError::LineSearchFailure(60));
        }
    }
    Ok((point, value))
}

/// Solution of the Euclidean GW reformulations: coupling, the alignment
/// matrix of the block problem, the reported GW cost, and the sweep count.
#[derive(Debug, Clone)]
pub struct EuclideanGwSolution {
    pub coupling: Coupling,
    pub alignment: Array2<f64>,
    pub cost: f64,
    pub iterations: usize,
}

fn gram(x: &Array2<f64>) -> Array2<f64> {
    x.dot(&x.t())
}

/// Inner-product GW by block-coordinate ascent on the bilinear surrogate
/// `<X P^T Y^T, pi>` with `|P|_F = sqrt(p)`:
/// the P-step is the closed-form normalization of `Y^T pi^T X`, the pi-step
/// one exact linear solve with cost `-X P^T Y^T`. The surrogate is
/// non-decreasing across both half-steps; the reported cost is the quartic
/// inner-product GW objective of the final coupling.
pub fn inner_gw_bcd(
    x: &Array2<f64>,
    y: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    max_sweeps: usize,
    tol: f64,
    init: Option<&Coupling>,
) -> Result<EuclideanGwSolution> {
    inner_gw_bcd_traced(x, y, a, b, max_sweeps, tol, init).map(|(s, _)| s)
}

/// As [`inner_gw_bcd`], also returning the surrogate value after every
/// half-step (P-step then pi-step, non-decreasing).
pub fn inner_gw_bcd_traced(
    x: &Array2<f64>,
    y: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    max_sweeps: usize,
    tol: f64,
    init: Option<&Coupling>,
) -> Result<(EuclideanGwSolution, Vec<f64>)> {
    let (n, m) = (x.nrows(), y.nrows());
    if n != a.len() || m != b.len() {
        return Err(OtError::ShapeMismatch("points vs histograms".into()));
    }
    let p_dim = x.ncols();
    let sqrt_p = (p_dim as f64).sqrt();
    let mut plan = match init {
        Some(c) => c.plan().clone(),
        None => Coupling::product(a, b).plan().clone(),
    };
    let mut alignment = Array2::<f64>::zeros((y.ncols(), p_dim));
    let mut surrogate_trace = Vec::new();
    let mut iterations = 0usize;

    for it in 1..=max_sweeps {
        iterations = it;
        // P-step: closed-form maximizer sqrt(p) V / |V|_F of the linear
        // functional <P, V> on the Frobenius sphere.
        let cross = y.t().dot(&plan.t()).dot(x);
        let norm = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
        alignment = if norm > 0.0 {
            &cross * (sqrt_p / norm)
        } else {
            // Degenerate cross-covariance: fall back to the scaled first
            // canonical basis matrix.
            let mut e = Array2::zeros((y.ncols(), p_dim));
            e[[0, 0]] = sqrt_p;
            e
        };
        let score = x.dot(&alignment.t()).dot(&y.t());
        surrogate_trace.push(frob(&score, &plan));

        // pi-step: maximize <score, pi> over the polytope.
        let neg = score.mapv(|v| -v);
        let next = solve_exact(&neg, a, b)?.coupling;
        let movement = plan
            .iter()
            .zip(next.plan().iter())
            .fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs()));
        plan = next.plan().clone();
        surrogate_trace.push(frob(&score, &plan));
        if movement <= tol {
            break;
        }
    }

    let coupling = Coupling::from_iterate(plan, a.clone(), b.clone());
    let problem = GwProblem::new(gram(x), gram(y), a.clone(), b.clone())?;
    let cost = gw_cost(&problem, &coupling)?;
    Ok((
        EuclideanGwSolution {
            coupling,
            alignment,
            cost,
            iterations,
        },
        surrogate_trace,
    ))
}

/// Squared-Euclidean GW by block-coordinate ascent on the concave dual
/// surrogate `<X P^T Y^T + x y^T, pi> - |P|_F^2 / 8` after centering both
/// clouds at their weighted means. The reported cost is the GW objective
/// with squared Euclidean distance matrices (translation invariant, so
/// centering does not change it).
pub fn sq_gw_bcd(
    x: &Array2<f64>,
    y: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    max_sweeps: usize,
    tol: f64,
    init: Option<&Coupling>,
) -> Result<EuclideanGwSolution> {
    sq_gw_bcd_traced(x, y, a, b, max_sweeps, tol, init).map(|(s, _)| s)
}

/// As [`sq_gw_bcd`], also returning the surrogate after each half-step.
pub fn sq_gw_bcd_traced(
    x: &Array2<f64>,
    y: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    max_sweeps: usize,
    tol: f64,
    init: Option<&Coupling>,
) -> Result<(EuclideanGwSolution, Vec<f64>)> {
    let (n, m) = (x.nrows(), y.nrows());
    if n != a.len() || m != b.len() {
        return Err(OtError::ShapeMismatch("points vs histograms".into()));
    }
    // Weighted centering: the translation-invariance argument is about the
    // measure means, which are the weighted ones.
    let center = |pts: &Array2<f64>, w: &Histogram| -> Array2<f64> {
        let mut mean = Array1::<f64>::zeros(pts.ncols());
        for (row, &wi) in pts.rows().into_iter().zip(w.as_slice()) {
            mean = mean + &row * wi;
        }
        let mut out = pts.clone();
        for mut row in out.rows_mut() {
            row -= &mean;
        }
        out
    };
    let xc = center(x, a);
    let yc = center(y, b);
    let x_norms = Array1::from_shape_fn(n, |i| xc.row(i).dot(&xc.row(i)));
    let y_norms = Array1::from_shape_fn(m, |j| yc.row(j).dot(&yc.row(j)));

    let mut plan = match init {
        Some(c) => c.plan().clone(),
        None => Coupling::product(a, b).plan().clone(),
    };
    let mut alignment = Array2::<f64>::zeros((yc.ncols(), xc.ncols()));
    let mut trace = Vec::new();
    let mut iterations = 0usize;

    let surrogate = |p_mat: &Array2<f64>, plan: &Array2<f64>| -> f64 {
        let score = xc.dot(&p_mat.t()).dot(&yc.t());
        let mut acc = frob(&score, plan);
        for i in 0..n {
            for j in 0..m {
                acc += x_norms[i] * y_norms[j] * plan[[i, j]];
            }
        }
        acc - p_mat.iter().map(|v| v * v).sum::<f64>() / 8.0
    };

    for it in 1..=max_sweeps {
        iterations = it;
        // P-step: exact maximizer 4 Y^T pi^T X of the quadratic block.
        alignment = yc.t().dot(&plan.t()).dot(&xc) * 4.0;
        trace.push(surrogate(&alignment, &plan));

        // pi-step: linear OT with cost -(X P^T Y^T + x y^T).
        let score = xc.dot(&alignment.t()).dot(&yc.t());
        let cost_matrix = Array2::from_shape_fn((n, m), |(i, j)| {
            -(score[[i, j]] + x_norms[i] * y_norms[j])
        });
        let next = solve_exact(&cost_matrix, a, b)?.coupling;
        let movement = plan
            .iter()
            .zip(next.plan().iter())
            .fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs()));
        plan = next.plan().clone();
        trace.push(surrogate(&alignment, &plan));
        if movement <= tol {
            break;
        }
    }

    let coupling = Coupling::from_iterate(plan, a.clone(), b.clone());
    let problem = GwProblem::new(
        sq_dist_matrix(&xc, &xc),
        sq_dist_matrix(&yc, &yc),
        a.clone(),
        b.clone(),
    )?;
    let cost = gw_cost(&problem, &coupling)?;
    Ok((
        EuclideanGwSolution {
            coupling,
            alignment,
            cost,
            iterations,
        },
        trace,
    ))
}

/// Random coupling by Sinkhorn-scaling a positive random matrix to the
/// prescribed marginals; used for multi-start initialization.
pub fn random_coupling(a: &Histogram, b: &Histogram, rng: &mut ChaCha8Rng) -> Coupling {
    let raw = Array2::from_shape_fn((a.len(), b.len()), |_| rng.gen::<f64>() + 0.1);
    // Zero cost matrix: pure scaling toward the marginals.
    let zeros = Array2::zeros((a.len(), b.len()));
    let params = SinkhornParams {
        epsilon: 1.0,
        max_iter: 500,
        marginal_tol: 1e-12,
        log_stabilize: false,
    };
    match crate::linear::sinkhorn_with_reference(&zeros, a, b, Some(&raw), &params) {
        Ok(sol) => sol.coupling,
        Err(_) => Coupling::product(a, b),
    }
}

/// Multi-start wrapper around [`inner_gw_bcd`]: `starts` seeded random
/// doubly-stochastic inits (plus the product coupling), best final cost
/// wins. Runs execute in parallel; the result is deterministic given the
/// seed.
pub fn inner_gw_multistart(
    x: &Array2<f64>,
    y: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    max_sweeps: usize,
    tol: f64,
    starts: usize,
    seed: u64,
) -> Result<EuclideanGwSolution> {
    let inits: Vec<Option<Coupling>> = std::iter::once(None)
        .chain((0..starts).map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            Some(random_coupling(a, b, &mut rng))
        }))
        .collect();
    let runs: Vec<EuclideanGwSolution> = inits
        .par_iter()
        .map(|init| inner_gw_bcd(x, y, a, b, max_sweeps, tol, init.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(runs
        .into_iter()
        .min_by(|u, v| u.cost.partial_cmp(&v.cost).unwrap())
        .expect("at least one run"))
}

/// Multi-start wrapper around [`sq_gw_bcd`], same protocol as
/// [`inner_gw_multistart`].
pub fn sq_gw_multistart(
    x: &Array2<f64>,
    y: &Array2<f64>,
    a: &Histogram,
    b: &Histogram,
    max_sweeps: usize,
    tol: f64,
    starts: usize,
    seed: u64,
) -> Result<EuclideanGwSolution> {
    let inits: Vec<Option<Coupling>> = std::iter::once(None)
        .chain((0..starts).map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            Some(random_coupling(a, b, &mut rng))
        }))
        .collect();
    let runs: Vec<EuclideanGwSolution> = inits
        .par_iter()
        .map(|init| sq_gw_bcd(x, y, a, b, max_sweeps, tol, init.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(runs
        .into_iter()
        .min_by(|u, v| u.cost.partial_cmp(&v.cost).unwrap())
        .expect("at least one run"))
}

/// Monotone direction chosen by the 1D inner-product closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneDirection {
    Ascending,
    Descending,
}

/// 1D inner-product GW: evaluates the quartic objective at the monotone
/// ascending coupling (CDF matching) and the monotone descending coupling
/// (anti-CDF matching) and returns the cheaper, with its coupling.
pub fn inner_gw_1d(
    xs: &[f64],
    a: &Histogram,
    ys: &[f64],
    b: &Histogram,
) -> Result<(f64, Coupling, MonotoneDirection)> {
    let x_col = Array2::from_shape_fn((xs.len(), 1), |(i, _)| xs[i]);
    let y_col = Array2::from_shape_fn((ys.len(), 1), |(j, _)| ys[j]);
    let problem = GwProblem::new(gram(&x_col), gram(&y_col), a.clone(), b.clone())?;

    let ascending = wasserstein_1d(xs, a, ys, b, 2)?.coupling;
    // Anti-CDF matching: reverse the target and mirror the plan back.
    let ys_rev: Vec<f64> = ys.iter().rev().copied().collect();
    let b_rev = Histogram::new(Array1::from_iter(b.as_slice().iter().rev().copied()))?;
    let reversed = wasserstein_1d(xs, a, &ys_rev, &b_rev, 2)?.coupling;
    let m = ys.len();
    let descending_plan =
        Array2::from_shape_fn((xs.len(), m), |(i, j)| reversed.plan()[[i, m - 1 - j]]);
    let descending = Coupling::from_iterate(descending_plan, a.clone(), b.clone());

    let asc_cost = gw_cost(&problem, &ascending)?;
    let desc_cost = gw_cost(&problem, &descending)?;
    if asc_cost <= desc_cost {
        Ok((asc_cost, ascending, MonotoneDirection::Ascending))
    } else {
        Ok((desc_cost, descending, MonotoneDirection::Descending))
    }
}

/// Result of the linear Gromov-Monge problem between centered Gaussians.
#[derive(Debug, Clone)]
pub struct LgmSolution {
    pub cost: f64,
    /// Optimal linear map, available when `p == q`.
    pub map: Option<Array2<f64>>,
    /// Optimal Stiefel alignment of the eigenvalue pairing term, available
    /// when `p != q`.
    pub stiefel: Option<Array2<f64>>,
}

/// Linear Gromov-Monge between Gaussians:
/// `4 (tr S_mu - tr S_nu)^2 + 8 (tr S_mu^2 + tr S_nu^2) + 16 min_B
/// -tr(D_mu B^T D_nu B)` over the Stiefel manifold, with eigenvalues sorted
/// nondecreasing. For `p == q` the minimum is `-tr(D_mu D_nu)` at `B = I`
/// and the optimal map `V_nu D_nu^{1/2} D_mu^{-1/2} V_mu^T` is returned
/// (requires `S_mu` nonsingular).
pub fn lgm_gaussian(sigma_mu: &Array2<f64>, sigma_nu: &Array2<f64>) -> Result<LgmSolution> {
    let p = sigma_mu.nrows();
    let q = sigma_nu.nrows();
    if sigma_mu.ncols() != p || sigma_nu.ncols() != q {
        return Err(OtError::ShapeMismatch("covariances must be square".into()));
    }
    if p > q {
        return Err(OtError::ShapeMismatch(format!(
            "source dimension {p} exceeds target dimension {q}; the Stiefel pairing needs p <= q"
        )));
    }
    let (d_mu, v_mu) = eigh(sigma_mu)?;
    let (d_nu, v_nu) = eigh(sigma_nu)?;
    if d_mu[0] < -1e-10 || d_nu[0] < -1e-10 {
        return Err(OtError::BadParams("covariances must be PSD".into()));
    }

    let tr_mu: f64 = d_mu.sum();
    let tr_nu: f64 = d_nu.sum();
    let tr_mu_sq: f64 = d_mu.iter().map(|v| v * v).sum();
    let tr_nu_sq: f64 = d_nu.iter().map(|v| v * v).sum();
    let base = 4.0 * (tr_mu - tr_nu).powi(2) + 8.0 * (tr_mu_sq + tr_nu_sq);

    if p == q {
        let pairing: f64 = d_mu.iter().zip(d_nu.iter()).map(|(u, v)| u * v).sum();
        let cost = base - 16.0 * pairing;
        let scale = d_mu[p - 1].max(1.0);
        if d_mu[0] <= 1e-10 * scale {
            return Err(OtError::SingularCovariance);
        }
        let mut mid = v_nu.clone();
        for k in 0..p {
            let factor = d_nu[k].max(0.0).sqrt() / d_mu[k].sqrt();
            for i in 0..p {
                mid[[i, k]] *= factor;
            }
        }
        let map = mid.dot(&v_mu.t());
        Ok(LgmSolution {
            cost,
            map: Some(map),
            stiefel: None,
        })
    } else {
        // Pair the p source eigenvalues with the top p target eigenvalues
        // (both nondecreasing, so the top block aligns largest with
        // largest); that selection is the QPOC optimum and seeds the
        // manifold descent.
        let mut init = Array2::zeros((q, p));
        for k in 0..p {
            init[[q - p + k, k]] = 1.0;
        }
        let objective = |b_mat: &Array2<f64>| -> f64 {
            // -tr(D_mu B^T D_nu B) with diagonal D's.
            let mut acc = 0.0;
            for i in 0..q {
                for k in 0..p {
                    acc += d_nu[i] * b_mat[[i, k]] * b_mat[[i, k]] * d_mu[k];
                }
            }
            -acc
        };
        let gradient = |b_mat: &Array2<f64>| -> Array2<f64> {
            Array2::from_shape_fn((q, p), |(i, k)| -2.0 * d_nu[i] * b_mat[[i, k]] * d_mu[k])
        };
        let (b_opt, value) = stiefel_minimize(
            objective,
            gradient,
            (q, p),
            &StiefelOptParams::default(),
            Some(&init),
        )?;
        Ok(LgmSolution {
            cost: base + 16.0 * value,
            map: None,
            stiefel: Some(b_opt),
        })
    }
}

/// QPOC objective `-tr(D_mu B^T D_nu B)` for diagonal eigenvalue vectors;
/// exposed for the grid-oracle acceptance checks.
pub fn qpoc_objective(d_mu: &[f64], d_nu: &[f64], b_mat: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..b_mat.nrows() {
        for k in 0..b_mat.ncols() {
            acc += d_nu[i] * b_mat[[i, k]] * b_mat[[i, k]] * d_mu[k];
        }
    }
    -acc
}
