//! Fused Gromov-Wasserstein: conditional gradient with exact line search,
//! free-support barycenters over labeled graphs, and k-means clustering
//! with FGW barycenters as centroids.

mod graph;

pub use graph::{
    adjacency_from_structure, shortest_path_matrix, wl_relabel, wl_relabel_pair,
    AdjacencyRecovery,
};

use crate::gromov::{gw_tensor_apply, GwProblem};
use crate::linalg::{dist_matrix, frob, sq_dist_matrix};
use crate::linear::solve_exact;
use crate::measures::Features;
use crate::{Coupling, Histogram, OtError, Result, StructuredObject};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Distance between node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMetric {
    /// Euclidean distance between dense feature rows.
    L2,
    /// Squared Euclidean distance between dense feature rows.
    L2Squared,
    /// Count of differing coordinates between label rows; for single-column
    /// labels this is the 0/1 metric, for stacked WL codes it sums the
    /// per-level disagreements.
    LabelHamming,
}

/// Pairwise feature cost matrix `M[i][j] = d(a_i, b_j)`.
pub fn feature_cost_matrix(
    feat_a: &Features,
    feat_b: &Features,
    metric: FeatureMetric,
) -> Result<Array2<f64>> {
    match (feat_a, feat_b, metric) {
        (Features::Dense(a), Features::Dense(b), FeatureMetric::L2) => {
            if a.ncols() != b.ncols() {
                return Err(OtError::ShapeMismatch(format!(
                    "feature dims {} vs {}",
                    a.ncols(),
                    b.ncols()
                )));
            }
            Ok(dist_matrix(a, b))
        }
        (Features::Dense(a), Features::Dense(b), FeatureMetric::L2Squared) => {
            if a.ncols() != b.ncols() {
                return Err(OtError::ShapeMismatch(format!(
                    "feature dims {} vs {}",
                    a.ncols(),
                    b.ncols()
                )));
            }
            Ok(sq_dist_matrix(a, b))
        }
        (Features::Labels(a), Features::Labels(b), FeatureMetric::LabelHamming) => {
            if a.ncols() != b.ncols() {
                return Err(OtError::ShapeMismatch(format!(
                    "label levels {} vs {}",
                    a.ncols(),
                    b.ncols()
                )));
            }
            let mut out = Array2::zeros((a.nrows(), b.nrows()));
            for i in 0..a.nrows() {
                for j in 0..b.nrows() {
                    let mut count = 0usize;
                    for k in 0..a.ncols() {
                        if a[[i, k]] != b[[j, k]] {
                            count += 1;
                        }
                    }
                    out[[i, j]] = count as f64;
                }
            }
            Ok(out)
        }
        _ => Err(OtError::MixedFeatureKinds),
    }
}

#[derive(Debug, Clone)]
pub struct FgwParams {
    /// Structure/feature trade-off in `[0, 1]`: 0 is pure feature transport,
    /// 1 is pure GW.
    pub alpha: f64,
    /// Loss exponent; 2 enables the closed-form line search, 1 is solved
    /// with golden-section search instead.
    pub q: u32,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub fw_gap_tol: f64,
}

impl Default for FgwParams {
    fn default() -> Self {
        FgwParams {
            alpha: 0.5,
            q: 2,
            max_iter: 200,
            rel_tol: 1e-9,
            fw_gap_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FgwSolution {
    pub coupling: Coupling,
    pub cost: f64,
    /// Frank-Wolfe gap at each iteration.
    pub fw_gaps: Vec<f64>,
    /// Accepted line-search step at each iteration.
    pub line_steps: Vec<f64>,
    /// Objective after init and after each update (non-increasing).
    pub cost_history: Vec<f64>,
}

fn fgw_objective(
    mq: &Array2<f64>,
    problem: &GwProblem,
    alpha: f64,
    plan: &Array2<f64>,
) -> Result<f64> {
    let quad = frob(&gw_tensor_apply(problem, plan)?, plan);
    Ok((1.0 - alpha) * frob(mq, plan) + alpha * quad)
}

/// Conditional-gradient solver for the FGW objective
/// `(1-alpha) <M^q, pi> + alpha <L(C1,C2)^q ⊗ pi, pi>`.
///
/// The feature matrix is exponentiated elementwise by `params.q` here;
/// callers pass raw distances. Default init is the product coupling
/// `h g^T`; tests that must reach an identity-supported optimum pass a
/// diagonal init instead.
pub fn fgw_solve(
    m_ab: &Array2<f64>,
    c1: &Array2<f64>,
    c2: &Array2<f64>,
    h: &Histogram,
    g: &Histogram,
    params: &FgwParams,
    init: Option<&Coupling>,
) -> Result<FgwSolution> {
    let (n, m) = (h.len(), g.len());
    if m_ab.nrows() != n || m_ab.ncols() != m {
        return Err(OtError::ShapeMismatch(format!(
            "feature matrix {}x{} vs histograms {} / {}",
            m_ab.nrows(),
            m_ab.ncols(),
            n,
            m
        )));
    }
    if !(0.0..=1.0).contains(&params.alpha) {
        return Err(OtError::BadParams(format!("alpha={} outside [0,1]", params.alpha)));
    }
    let problem =
        GwProblem::with_exponent(c1.clone(), c2.clone(), h.clone(), g.clone(), params.q)?;
    let mq = m_ab.mapv(|v| v.abs().powi(params.q as i32));

    let mut plan = match init {
        Some(c) => {
            if c.shape() != (n, m) {
                return Err(OtError::ShapeMismatch("init coupling shape".into()));
            }
            c.plan().clone()
        }
        None => Coupling::product(h, g).plan().clone(),
    };
    let mut cost = fgw_objective(&mq, &problem, params.alpha, &plan)?;
    let mut cost_history = vec![cost];
    let mut fw_gaps = Vec::new();
    let mut line_steps = Vec::new();

    for _it in 0..params.max_iter {
        let quad_grad = gw_tensor_apply(&problem, &plan)?;
        let mut gradient = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                gradient[[i, j]] =
                    (1.0 - params.alpha) * mq[[i, j]] + 2.0 * params.alpha * quad_grad[[i, j]];
            }
        }
        let direction = solve_exact(&gradient, h, g)?.coupling;
        // FW gap <pi~ - pi, -G>, reusing the direction already solved.
        let gap = frob(&plan, &gradient) - frob(direction.plan(), &gradient);
        fw_gaps.push(gap);
        if gap <= params.fw_gap_tol {
            break;
        }

        let tau = if params.q == 2 {
            fgw_line_search(&plan, direction.plan(), &mq, c1, c2, h, g, params.alpha)
        } else {
            golden_section_step(&mq, &problem, params.alpha, &plan, direction.plan())?
        };
        line_steps.push(tau);
        let delta = direction.plan() - &plan;
        plan = &plan + &(&delta * tau);
        let new_cost = fgw_objective(&mq, &problem, params.alpha, &plan)?;
        let decrease = cost - new_cost;
        cost = new_cost;
        cost_history.push(cost);
        if decrease.abs() <= params.rel_tol * cost.abs().max(1e-16) {
            break;
        }
    }

    Ok(FgwSolution {
        coupling: Coupling::from_iterate(plan, h.clone(), g.clone()),
        cost,
        fw_gaps,
        line_steps,
        cost_history,
    })
}

/// Closed-form line search for the q = 2 objective restricted to the segment
/// `pi + tau (pi~ - pi)`, `tau in [0, 1]`.
///
/// With `delta = pi~ - pi`: `a = -2 alpha <C1 delta C2, delta>` and
/// `b = (1-alpha) <M, delta> + alpha <c_{C1,C2}, delta>
///      - 4 alpha <C1 pi C2, delta>`,
/// where `c_{C1,C2}` is the constant matrix built from `(h, g)`. If `a > 0`
/// the minimizer is `clamp(-b/2a)`; otherwise the segment endpoint with
/// `tau = 1` iff `a + b < 0`.
#[allow(clippy::too_many_arguments)]
pub fn fgw_line_search(
    state: &Array2<f64>,
    direction: &Array2<f64>,
    m_ab: &Array2<f64>,
    c1: &Array2<f64>,
    c2: &Array2<f64>,
    h: &Histogram,
    g: &Histogram,
    alpha: f64,
) -> f64 {
    let delta = direction - state;
    let c1_delta_c2 = c1.dot(&delta).dot(c2);
    let a = -2.0 * alpha * frob(&c1_delta_c2, &delta);

    // Constant part of the squared-loss decomposition from the marginals.
    let c1_sq_h = c1.mapv(|v| v * v).dot(h.weights());
    let c2_sq_g = c2.mapv(|v| v * v).dot(g.weights());
    let mut const_dot = 0.0;
    for i in 0..delta.nrows() {
        for j in 0..delta.ncols() {
            const_dot += (c1_sq_h[i] + c2_sq_g[j]) * delta[[i, j]];
        }
    }
    let c1_pi_c2 = c1.dot(state).dot(c2);
    let b = (1.0 - alpha) * frob(m_ab, &delta) + alpha * const_dot
        - 4.0 * alpha * frob(&c1_pi_c2, &delta);

    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a + b < 0.0 {
        1.0
    } else {
        0.0
    }
}

fn golden_section_step(
    mq: &Array2<f64>,
    problem: &GwProblem,
    alpha: f64,
    plan: &Array2<f64>,
    direction: &Array2<f64>,
) -> Result<f64> {
    let eval = |tau: f64| -> Result<f64> {
        let candidate = plan * (1.0 - tau) + direction * tau;
        fgw_objective(mq, problem, alpha, &candidate)
    };
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    for _ in 0..60 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    // Candidates include the endpoints so a boundary minimum is exact.
    let mid = 0.5 * (lo + hi);
    let mut best = (0.0, eval(0.0)?);
    for cand in [mid, 1.0] {
        let val = eval(cand)?;
        if val < best.1 {
            best = (cand, val);
        }
    }
    Ok(best.0)
}

/// Free-support FGW barycenter over structured objects with dense features;
/// q = 2 and squared-Euclidean feature cost (the closed-form updates are the
/// exact block minimizers for that combination).
pub fn fgw_barycenter(
    inputs: &[StructuredObject],
    lambdas: &Histogram,
    n_nodes: usize,
    h: &Histogram,
    params: &FgwParams,
    max_sweeps: usize,
) -> Result<StructuredObject> {
    fgw_barycenter_detailed(inputs, lambdas, n_nodes, h, params, max_sweeps).map(|(s, _)| s)
}

/// As [`fgw_barycenter`], also returning the objective after each sweep.
pub fn fgw_barycenter_detailed(
    inputs: &[StructuredObject],
    lambdas: &Histogram,
    n_nodes: usize,
    h: &Histogram,
    params: &FgwParams,
    max_sweeps: usize,
) -> Result<(StructuredObject, Vec<f64>)> {
    if inputs.is_empty() {
        return Err(OtError::BadParams("need at least one input".into()));
    }
    if lambdas.len() != inputs.len() {
        return Err(OtError::LengthMismatch {
            expected: inputs.len(),
            actual: lambdas.len(),
        });
    }
    if params.q != 2 {
        return Err(OtError::UnsupportedExponent(params.q));
    }
    if h.len() != n_nodes {
        return Err(OtError::LengthMismatch {
            expected: n_nodes,
            actual: h.len(),
        });
    }
    if h.weights().iter().any(|&w| w <= 0.0) {
        return Err(OtError::BadParams(
            "barycenter node weights must be strictly positive".into(),
        ));
    }
    let dense: Vec<&Array2<f64>> = inputs
        .iter()
        .map(|o| match o.features() {
            Features::Dense(b) => Ok(b),
            Features::Labels(_) => Err(OtError::MixedFeatureKinds),
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = dense[0].ncols();
    if dense.iter().any(|b| b.ncols() != dim) {
        return Err(OtError::ShapeMismatch("feature dimensions differ".into()));
    }

    // Deterministic init by subsampling the first input.
    let n0 = inputs[0].len();
    let mut structure = Array2::from_shape_fn((n_nodes, n_nodes), |(i, j)| {
        inputs[0].structure()[[(i * n0) / n_nodes, (j * n0) / n_nodes]]
    });
    let mut features =
        Array2::from_shape_fn((n_nodes, dim), |(i, c)| dense[0][[(i * n0) / n_nodes, c]]);
    let mut plans: Vec<Coupling> = inputs
        .iter()
        .map(|o| Coupling::product(h, o.weights()))
        .collect();
    let mut term_costs = vec![f64::INFINITY; inputs.len()];
    let mut objectives = Vec::new();

    for _sweep in 0..max_sweeps {
        let updates: Vec<(Coupling, f64)> = inputs
            .par_iter()
            .zip(dense.par_iter().zip(plans.par_iter()))
            .map(|(obj, (b_k, warm))| -> Result<(Coupling, f64)> {
                let m_k = dist_matrix(&features, b_k);
                let sol = fgw_solve(
                    &m_k,
                    &structure,
                    obj.structure(),
                    h,
                    obj.weights(),
                    params,
                    Some(warm),
                )?;
                // Guarded acceptance keeps the sweep monotone.
                let sub = GwProblem::new(
                    structure.clone(),
                    obj.structure().clone(),
                    h.clone(),
                    obj.weights().clone(),
                )?;
                let mq = m_k.mapv(|v| v * v);
                let warm_cost = fgw_objective(&mq, &sub, params.alpha, warm.plan())?;
                if sol.cost <= warm_cost {
                    Ok((sol.coupling, sol.cost))
                } else {
                    Ok((warm.clone(), warm_cost))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for ((plan_slot, cost_slot), (plan, cost)) in
            plans.iter_mut().zip(term_costs.iter_mut()).zip(updates)
        {
            *plan_slot = plan;
            *cost_slot = cost;
        }
        let objective: f64 = term_costs
            .iter()
            .zip(lambdas.as_slice())
            .map(|(c, &l)| l * c)
            .sum();
        objectives.push(objective);

        // Structure update (exact minimizer of the alpha-weighted term).
        let structure_inputs: Vec<(Array2<f64>, Histogram)> = inputs
            .iter()
            .map(|o| (o.structure().clone(), o.weights().clone()))
            .collect();
        structure =
            crate::gromov::gw_barycenter_structure_update(&plans, &structure_inputs, lambdas, h)?;

        // Feature update A = Diag(1/h) sum_k lambda_k pi_k B_k.
        let mut acc = Array2::<f64>::zeros((n_nodes, dim));
        for ((plan, b_k), &lambda) in plans.iter().zip(dense.iter()).zip(lambdas.as_slice()) {
            acc = acc + plan.plan().dot(*b_k) * lambda;
        }
        for (i, mut row) in acc.rows_mut().into_iter().enumerate() {
            let w = h.weights()[i];
            row.mapv_inplace(|v| v / w);
        }
        features = acc;

        if objectives.len() >= 2 {
            let prev = objectives[objectives.len() - 2];
            if (prev - objective).abs() <= 1e-10 * prev.abs().max(1e-12) {
                break;
            }
        }
    }

    let result = StructuredObject::new(
        structure.clone(),
        Features::Dense(features),
        h.clone(),
    )?;
    Ok((result, objectives))
}

/// FGW cost between two structured objects with the given params; feature
/// cost is Euclidean for dense features and hamming for labels.
pub fn fgw_distance(
    a: &StructuredObject,
    b: &StructuredObject,
    params: &FgwParams,
) -> Result<FgwSolution> {
    let metric = match (a.features(), b.features()) {
        (Features::Dense(_), Features::Dense(_)) => FeatureMetric::L2,
        (Features::Labels(_), Features::Labels(_)) => FeatureMetric::LabelHamming,
        _ => return Err(OtError::MixedFeatureKinds),
    };
    let m_ab = feature_cost_matrix(a.features(), b.features(), metric)?;
    fgw_solve(
        &m_ab,
        a.structure(),
        b.structure(),
        a.weights(),
        b.weights(),
        params,
        None,
    )
}

/// Lloyd-style k-means over structured objects: assignment by smallest FGW
/// cost, centroid update by [`fgw_barycenter`] over the assigned objects.
///
/// Centroid updates are kept only when they do not increase the cluster's
/// within-cost, so the total objective is non-increasing per iteration.
/// Empty clusters are re-seeded from the object farthest from its centroid.
pub fn fgw_kmeans(
    objects: &[StructuredObject],
    k: usize,
    n_centroid: usize,
    params: &FgwParams,
    seed: u64,
) -> Result<(Vec<usize>, Vec<StructuredObject>)> {
    if k == 0 || k > objects.len() {
        return Err(OtError::BadParams(format!(
            "k={} outside 1..={}",
            k,
            objects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = (0..objects.len()).collect();
    picks.shuffle(&mut rng);
    picks.truncate(k);

    let subsample = |obj: &StructuredObject| -> Result<StructuredObject> {
        let n = obj.len();
        let Features::Dense(feats) = obj.features() else {
            return Err(OtError::MixedFeatureKinds);
        };
        let structure = Array2::from_shape_fn((n_centroid, n_centroid), |(i, j)| {
            obj.structure()[[(i * n) / n_centroid, (j * n) / n_centroid]]
        });
        let features = Array2::from_shape_fn((n_centroid, feats.ncols()), |(i, c)| {
            feats[[(i * n) / n_centroid, c]]
        });
        StructuredObject::new(
            structure,
            Features::Dense(features),
            Histogram::uniform(n_centroid),
        )
    };
    let mut centroids: Vec<StructuredObject> = picks
        .iter()
        .map(|&i| subsample(&objects[i]))
        .collect::<Result<Vec<_>>>()?;

    let distances_to = |centroids: &[StructuredObject]| -> Result<Vec<Vec<f64>>> {
        objects
            .par_iter()
            .map(|obj| {
                centroids
                    .iter()
                    .map(|c| fgw_distance(obj, c, params).map(|s| s.cost))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect()
    };

    let mut assignments = vec![0usize; objects.len()];
    let mut objective = f64::INFINITY;
    for _iter in 0..50 {
        let dists = distances_to(&centroids)?;
        let new_assignments: Vec<usize> = dists
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(idx, _)| idx)
                    .unwrap()
            })
            .collect();
        let new_objective: f64 = dists
            .iter()
            .zip(&new_assignments)
            .map(|(row, &c)| row[c])
            .sum();

        // Re-seed empty clusters from the farthest object.
        let mut counts = vec![0usize; k];
        for &c in &new_assignments {
            counts[c] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            let farthest = dists
                .iter()
                .zip(&new_assignments)
                .enumerate()
                .max_by(|(_, (ra, &ca)), (_, (rb, &cb))| ra[ca].partial_cmp(&rb[cb]).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            centroids[empty] = subsample(&objects[farthest])?;
            continue;
        }

        let stable = new_assignments == assignments;
        assignments = new_assignments;
        objective = new_objective;
        if stable {
            break;
        }

        // Centroid update with guarded acceptance per cluster.
        let h = Histogram::uniform(n_centroid);
        for c in 0..k {
            let members: Vec<StructuredObject> = objects
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == c)
                .map(|(o, _)| o.clone())
                .collect();
            let lambdas = Histogram::uniform(members.len());
            let candidate =
                fgw_barycenter(&members, &lambdas, n_centroid, &h, params, 10)?;
            let old_cost: f64 = members
                .iter()
                .map(|o| fgw_distance(o, &centroids[c], params).map(|s| s.cost))
                .sum::<Result<f64>>()?;
            let new_cost: f64 = members
                .iter()
                .map(|o| fgw_distance(o, &candidate, params).map(|s| s.cost))
                .sum::<Result<f64>>()?;
            if new_cost <= old_cost {
                centroids[c] = candidate;
            }
        }
    }
    let _ = objective;
    Ok((assignments, centroids))
}
