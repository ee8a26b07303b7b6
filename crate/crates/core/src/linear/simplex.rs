//! Transportation simplex on the bipartite flow formulation.
//!
//! The basis is a spanning tree over row and column nodes with exactly
//! `n + m - 1` basic cells. Entering and leaving variables follow Bland's
//! rule (lowest row-major index), which rules out cycling under degeneracy
//! and makes the pivot sequence — and therefore the returned extreme point —
//! reproducible across callers that share a cost matrix up to positive
//! scaling. Should the pivot cap ever be hit, the solve is retried once with
//! ε-perturbed supplies and the final basis is re-evaluated against the
//! unperturbed marginals.

use super::OtSolution;
use crate::{measures::Coupling, Histogram, OtError, Result};
use ndarray::{Array1, Array2};

/// Greedy north-west corner plan. Always a valid coupling; optimal whenever
/// the cost matrix has the Monge property.
pub fn north_west_corner(a: &Histogram, b: &Histogram) -> Coupling {
    let (cells, _) = north_west_basis(a.weights(), b.weights());
    let mut plan = Array2::zeros((a.len(), b.len()));
    for &(i, j, v) in &cells {
        plan[[i, j]] = v;
    }
    Coupling::from_iterate(plan, a.clone(), b.clone())
}

/// Tests the Monge (submodularity) property on every adjacent 2x2 block,
/// with 1e-12 slack.
pub fn is_monge(cost: &Array2<f64>) -> bool {
    let (n, m) = (cost.nrows(), cost.ncols());
    for i in 0..n.saturating_sub(1) {
        for j in 0..m.saturating_sub(1) {
            let lhs = cost[[i, j]] + cost[[i + 1, j + 1]];
            let rhs = cost[[i + 1, j]] + cost[[i, j + 1]];
            if lhs > rhs + 1e-12 {
                return false;
            }
        }
    }
    true
}

/// North-west fill that returns exactly `n + m - 1` basic cells forming a
/// spanning tree, inserting zero-valued cells on degenerate ties.
fn north_west_basis(a: &Array1<f64>, b: &Array1<f64>) -> (Vec<(usize, usize, f64)>, usize) {
    let (n, m) = (a.len(), b.len());
    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    let mut cells = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let v = rem_a[i].min(rem_b[j]).max(0.0);
        cells.push((i, j, v));
        rem_a[i] -= v;
        rem_b[j] -= v;
        if i == n - 1 && j == m - 1 {
            break;
        }
        // Advance exactly one index per step so the cell count lands on
        // n + m - 1. On ties prefer the row unless exhausted.
        if (rem_a[i] <= rem_b[j] && i < n - 1) || j == m - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(cells.len(), n + m - 1);
    (cells, n + m - 1)
}

struct Basis {
    n: usize,
    m: usize,
    /// Basic cells as (row, col, value).
    cells: Vec<(usize, usize, f64)>,
    ///

    /// Node adjacency: node ids are rows `0..n`, then cols `n..n+m`.
    /// Each entry lists (neighbor node, index into `cells`).
    adj: Vec<Vec<(usize, usize)>>,
}

impl Basis {
    fn new(n: usize, m: usize, cells: Vec<(usize, usize, f64)>) -> Self {
        let mut basis = Basis {
            n,
            m,
            cells,
            adj: vec![Vec::new(); n + m],
        };
        basis.rebuild_adjacency();
        basis
    }

    fn rebuild_adjacency(&mut self) {
        for l in self.adj.iter_mut() {
            l.clear();
        }
        for (idx, &(i, j, _)) in self.cells.iter().enumerate() {
            self.adj[i].push((self.n + j, idx));
            self.adj[self.n + j].push((i, idx));
        }
    }

    /// Duals from complementary slackness on the spanning tree, rooted at
    /// row 0 with alpha_0 = 0.
    fn duals(&self, cost: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        let (n, m) = (self.n, self.m);
        let mut alpha = Array1::zeros(n);
        let mut beta = Array1::zeros(m);
        let mut seen = vec![false; n + m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &(next, cell) in &self.adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j, _) = self.cells[cell];
                if next >= n {
                    beta[j] = cost[[i, j]] - alpha[i];
                } else {
                    alpha[i] = cost[[i, j]] - beta[j];
                }
                stack.push(next);
            }
        }
        (alpha, beta)
    }

    /// Tree path from row node `i` to col node `j` as a list of cell indices.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let (n, m) = (self.n, self.m);
        let target = n + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n + m];
        let mut seen = vec![false; n + m];
        let mut queue = std::collections::VecDeque::new();
        seen[i] = true;
        queue.push_back(i);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, cell) in &self.adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, cell));
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while let Some((prev, cell)) = parent[node] {
            cells.push(cell);
            node = prev;
        }
        cells.reverse();
        debug_assert!(!cells.is_empty());
        cells
    }
}

struct PivotOutcome {
    plan_cells: Vec<(usize, usize, f64)>,
    alpha: Array1<f64>,
    beta: Array1<f64>,
    pivots: usize,
}

/// Runs the simplex loop to optimality. `a`, `b` are raw (possibly
/// perturbed) marginals that must have equal total mass.
fn run_simplex(
    cost: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    max_pivots: usize,
) -> Result<PivotOutcome> {
    let (n, m) = (cost.nrows(), cost.ncols());
    let (cells, _) = north_west_basis(a, b);
    let mut basis = Basis::new(n, m, cells);
    let scale = crate::linalg::max_abs(cost).max(1.0);
    let tol = 1e-11 * scale;

    let mut pivots = 0usize;
    loop {
        let (alpha, beta) = basis.duals(cost);
        // Bland: first cell in row-major order with negative reduced cost.
        let mut entering = None;
        'scan: for i in 0..n {
            for j in 0..m {
                if cost[[i, j]] - alpha[i] - beta[j] < -tol {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(PivotOutcome {
                plan_cells: basis.cells.clone(),
                alpha,
                beta,
                pivots,
            });
        };
        if pivots >= max_pivots {
            return Err(OtError::NumericalFailure(format!(
                "transportation simplex exceeded {max_pivots} pivots"
            )));
        }
        pivots += 1;

        // The unique tree cycle: entering cell (+), then alternating signs
        // along the path from row ei to col ej. Cells at even positions of
        // the path (those sharing a node with the entering cell first) get
        // a minus sign.
        let path = basis.path(ei, ej);
        let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
        let plus: Vec<usize> = path.iter().skip(1).step_by(2).copied().collect();

        let theta = minus
            .iter()
            .map(|&c| basis.cells[c].2)
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        // Leaving cell: lexicographically smallest (i, j) among the minus
        // cells attaining theta (Bland tie-break).
        let mut leave = usize::MAX;
        for &cell in &minus {
            let (ci, cj, v) = basis.cells[cell];
            if v <= theta + 1e-15
                && (leave == usize::MAX || (ci, cj) < (basis.cells[leave].0, basis.cells[leave].1))
            {
                leave = cell;
            }
        }
        debug_assert!(leave != usize::MAX);

        for &cell in &minus {
            basis.cells[cell].2 = (basis.cells[cell].2 - theta).max(0.0);
        }
        for &cell in &plus {
            basis.cells[cell].2 += theta;
        }
        basis.cells[leave] = (ei, ej, theta);
        basis.rebuild_adjacency();
    }
}

/// Re-evaluates the basic solution of a given spanning-tree basis for the
/// (unperturbed) marginals by peeling leaves of the tree.
fn basis_values_for(
    n: usize,
    m: usize,
    cells: &[(usize, usize, f64)],
    a: &Array1<f64>,
    b: &Array1<f64>,
) -> Vec<(usize, usize, f64)> {
    let mut need: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let mut degree = vec![0usize; n + m];
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + m];
    for (idx, &(i, j, _)) in cells.iter().enumerate() {
        adj[i].push((n + j, idx));
        adj[n + j].push((i, idx));
        degree[i] += 1;
        degree[n + j] += 1;
    }
    let mut removed = vec![false; cells.len()];
    let mut values = vec![0.0; cells.len()];
    let mut leaves: Vec<usize> = (0..n + m).filter(|&v| degree[v] == 1).collect();
    while let Some(node) = leaves.pop() {
        let Some(&(next, cell)) = adj[node].iter().find(|&&(_, c)| !removed[c]) else {
            continue;
        };
        removed[cell] = true;
        let v = need[node];
        values[cell] = v;
        need[node] = 0.0;
        need[next] -= v;
        degree[node] -= 1;
        degree[next] -= 1;
        if degree[next] == 1 {
            leaves.push(next);
        }
    }
    cells
        .iter()
        .zip(values)
        .map(|(&(i, j, _), v)| (i, j, v.max(0.0)))
        .collect()
}

/// Exact solver for `min <C, pi>` over the transport polytope.
///
/// Returns an extreme-point coupling (support of at most `n + m - 1` cells),
/// the optimal cost, and dual potentials that certify optimality.
pub fn solve_exact(cost: &Array2<f64>, a: &Histogram, b: &Histogram) -> Result<OtSolution> {
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
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(OtError::NonFinite);
    }
    let max_pivots = 1000 + 40 * n * m;

    let outcome = match run_simplex(cost, a.weights(), b.weights(), max_pivots) {
        Ok(o) => o,
        Err(_) => {
            // Degenerate stall: perturb supplies, solve, then re-evaluate the
            // optimal basis on the true marginals.
            let eps = 1e-11;
            let mut pa = a.weights().clone();
            let mut pb = b.weights().clone();
            for (i, v) in pa.iter_mut().enumerate() {
                *v += eps * (i + 1) as f64;
            }
            let bump: f64 = eps * (n * (n + 1) / 2) as f64;
            pb[m - 1] += bump;
            let mut o = run_simplex(cost, &pa, &pb, max_pivots)?;
            o.plan_cells = basis_values_for(n, m, &o.plan_cells, a.weights(), b.weights());
            o
        }
    };

    let mut plan = Array2::zeros((n, m));
    for &(i, j, v) in &outcome.plan_cells {
        plan[[i, j]] = v;
    }
    let cost_value = crate::linalg::frob(cost, &plan);
    let coupling = Coupling::from_iterate(plan, a.clone(), b.clone());
    Ok(OtSolution {
        coupling,
        cost: cost_value,
        iterations: outcome.pivots,
        duals: Some((outcome.alpha, outcome.beta)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::make_histogram;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_uniform(cost: &Array2<f64>) -> f64 {
        // Min over permutation plans / n, valid for uniform square problems
        // by the Birkhoff extreme-point argument.
        let n = cost.nrows();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut idx, 0, &mut |perm| {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
            best = best.min(c / n as f64);
        });
        best
    }

    fn permute(idx: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == idx.len() {
            f(idx);
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(idx, k + 1, f);
            idx.swap(k, i);
        }
    }

    #[test]
    fn single_cell() {
        let a = make_histogram(&[1.0]).unwrap();
        let sol = solve_exact(&array![[5.0]], &a, &a).unwrap();
        assert_abs_diff_eq!(sol.cost, 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.coupling.plan()[[0, 0]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_diracs_cost_is_ground_distance_power() {
        // W_p(delta_x, delta_y)^p = d(x, y)^p.
        let a = make_histogram(&[1.0]).unwrap();
        let d: f64 = 3.0;
        let sol = solve_exact(&array![[d * d]], &a, &a).unwrap();
        assert_abs_diff_eq!(sol.cost, 9.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_permutation_brute_force_on_random_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let cost = Array2::from_shape_fn((4, 4), |_| rng.gen::<f64>() * 10.0);
            let u = Histogram::uniform(4);
            let sol = solve_exact(&cost, &u, &u).unwrap();
            let best = brute_force_uniform(&cost);
            assert_abs_diff_eq!(sol.cost, best, epsilon = 1e-10);
        }
    }

    #[test]
    fn duals_certify_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 3 + (trial % 5);
            let m = 2 + (trial % 6);
            let cost = Array2::from_shape_fn((n, m), |_| rng.gen::<f64>() * 4.0 - 1.0);
            let a = make_histogram(&(0..n).map(|_| rng.gen::<f64>() + 0.05).collect::<Vec<_>>()).unwrap();
            let b = make_histogram(&(0..m).map(|_| rng.gen::<f64>() + 0.05).collect::<Vec<_>>()).unwrap();
            let sol = solve_exact(&cost, &a, &b).unwrap();
            let (alpha, beta) = sol.duals.as_ref().unwrap();
            for i in 0..n {
                for j in 0..m {
                    assert!(alpha[i] + beta[j] <= cost[[i, j]] + 1e-7);
                    if sol.coupling.plan()[[i, j]] > 1e-12 {
                        assert_abs_diff_eq!(alpha[i] + beta[j], cost[[i, j]], epsilon = 1e-7);
                    }
                }
            }
            // Strong duality.
            let dual_value = alpha.dot(a.weights()) + beta.dot(b.weights());
            assert_abs_diff_eq!(dual_value, sol.cost, epsilon = 1e-7 * (1.0 + sol.cost.abs()));
            // Extreme point: support at most n + m - 1.
            let support = sol.coupling.plan().iter().filter(|&&v| v > 1e-12).count();
            assert!(support <= n + m - 1);
        }
    }

    #[test]
    fn handles_degenerate_marginals() {
        // Duplicated weights force degenerate pivots.
        let cost = array![
            [1.0, 2.0, 3.0, 4.0],
            [2.0, 1.0, 4.0, 3.0],
            [3.0, 4.0, 1.0, 2.0],
            [4.0, 3.0, 2.0, 1.0]
        ];
        let u = Histogram::uniform(4);
        let sol = solve_exact(&cost, &u, &u).unwrap();
        assert_abs_diff_eq!(sol.cost, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn north_west_corner_greedy_fill() {
        let one = make_histogram(&[1.0]).unwrap();
        assert_eq!(north_west_corner(&one, &one).plan()[[0, 0]], 1.0);

        let a = make_histogram(&[0.5, 0.5]).unwrap();
        let b = make_histogram(&[0.3, 0.7]).unwrap();
        let plan = north_west_corner(&a, &b);
        let expected = array![[0.3, 0.2], [0.0, 0.5]];
        for (x, y) in plan.plan().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn nw_corner_optimal_for_monge_costs() {
        // Sorted squared differences satisfy the Monge property; the greedy
        // plan must then match the exact optimum.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut xs: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 4.0).collect();
            let mut ys: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 4.0).collect();
            xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
            ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
            let cost = Array2::from_shape_fn((5, 5), |(i, j)| (xs[i] - ys[j]).powi(2));
            assert!(is_monge(&cost));
            let a = make_histogram(&(0..5).map(|_| rng.gen::<f64>() + 0.1).collect::<Vec<_>>()).unwrap();
            let b = make_histogram(&(0..5).map(|_| rng.gen::<f64>() + 0.1).collect::<Vec<_>>()).unwrap();
            let nw = north_west_corner(&a, &b);
            let nw_cost = crate::linalg::frob(&cost, nw.plan());
            let exact = solve_exact(&cost, &a, &b).unwrap();
            assert_abs_diff_eq!(nw_cost, exact.cost, epsilon = 1e-10);
        }
    }

    #[test]
    fn is_monge_basic_cases() {
        assert!(is_monge(&array![[0.0, 1.0], [1.0, 0.0]]));
        // Anti-diagonal preference violates submodularity:
        // c00 + c11 = 2 > c10 + c01 = 0.
        assert!(!is_monge(&array![[1.0, 0.0], [0.0, 1.0]]));
    }

    #[test]
    fn is_monge_violation_found_by_search() {
        // Random search for a violating matrix, then assert the detector
        // flags it: brute-force check of every 2x2 block as the oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut found = false;
        for _ in 0..200 {
            let c = Array2::from_shape_fn((4, 4), |_| rng.gen::<f64>());
            let mut violated = false;
            for i in 0..3 {
                for j in 0..3 {
                    if c[[i, j]] + c[[i + 1, j + 1]] > c[[i + 1, j]] + c[[i, j + 1]] + 1e-12 {
                        violated = true;
                    }
                }
            }
            if violated {
                found = true;
                assert!(!is_monge(&c));
            }
        }
        assert!(found, "random search never produced a Monge violation");
    }
}
