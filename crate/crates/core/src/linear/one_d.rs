//! 1D optimal transport by monotone rearrangement: sort both supports and
//! sweep the quantile functions against each other.

use super::OtSolution;
use crate::{measures::Coupling, Histogram, OtError, Result};
use ndarray::Array2;

/// Cost of the monotone coupling between two already-sorted weighted point
/// sets, with ground cost `|x - y|^p`. `ws` and `vs` must each sum to one.
pub fn monotone_1d_cost(xs: &[f64], ws: &[f64], ys: &[f64], vs: &[f64], p: u32) -> f64 {
    let mut cost = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let mut wi = ws[0];
    let mut vj = vs[0];
    loop {
        let mass = wi.min(vj);
        if mass > 0.0 {
            cost += mass * (xs[i] - ys[j]).abs().powi(p as i32);
        }
        wi -= mass;
        vj -= mass;
        let advance_i = wi <= vj;
        if advance_i {
            i += 1;
            if i == xs.len() {
                break;
            }
            wi = ws[i];
        } else {
            j += 1;
            if j == ys.len() {
                break;
            }
            vj = vs[j];
        }
    }
    cost
}

/// Exact 1D transport with cost `|x - y|^p`, `p >= 1`.
///
/// Inputs need not be sorted; the solver sorts internally (stable, so ties
/// keep their original order) and scatters the monotone plan back to the
/// original indexing. Duals are not produced.
pub fn wasserstein_1d(
    xs: &[f64],
    a: &Histogram,
    ys: &[f64],
    b: &Histogram,
    p: u32,
) -> Result<OtSolution> {
    if xs.len() != a.len() {
        return Err(OtError::LengthMismatch {
            expected: xs.len(),
            actual: a.len(),
        });
    }
    if ys.len() != b.len() {
        return Err(OtError::LengthMismatch {
            expected: ys.len(),
            actual: b.len(),
        });
    }
    if p == 0 {
        return Err(OtError::BadParams("exponent p must be >= 1".into()));
    }
    let (n, m) = (xs.len(), ys.len());
    let mut xi: Vec<usize> = (0..n).collect();
    let mut yi: Vec<usize> = (0..m).collect();
    xi.sort_by(|&u, &w| xs[u].partial_cmp(&xs[w]).unwrap());
    yi.sort_by(|&u, &w| ys[u].partial_cmp(&ys[w]).unwrap());

    let mut plan = Array2::zeros((n, m));
    let mut cost = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let mut wi = a.weights()[xi[0]];
    let mut vj = b.weights()[yi[0]];
    loop {
        let mass = wi.min(vj);
        if mass > 0.0 {
            plan[[xi[i], yi[j]]] += mass;
            cost += mass * (xs[xi[i]] - ys[yi[j]]).abs().powi(p as i32);
        }
        wi -= mass;
        vj -= mass;
        if wi <= vj {
            i += 1;
            if i == n {
                break;
            }
            wi = a.weights()[xi[i]];
        } else {
            j += 1;
            if j == m {
                break;
            }
            vj = b.weights()[yi[j]];
        }
    }

    Ok(OtSolution {
        coupling: Coupling::from_iterate(plan, a.clone(), b.clone()),
        cost,
        iterations: 0,
        duals: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::solve_exact;
    use crate::{make_histogram, Histogram};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_measures_cost_zero() {
        let xs = [0.3, 1.5, -0.2];
        let h = Histogram::uniform(3);
        let sol = wasserstein_1d(&xs, &h, &xs, &h, 2).unwrap();
        assert_abs_diff_eq!(sol.cost, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_diracs() {
        let one = make_histogram(&[1.0]).unwrap();
        let sol = wasserstein_1d(&[0.0], &one, &[3.0], &one, 2).unwrap();
        assert_abs_diff_eq!(sol.cost, 9.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_exact_lp_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for p in [1u32, 2] {
            for _ in 0..30 {
                let n = rng.gen_range(2..=6);
                let m = rng.gen_range(2..=6);
                let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
                let ys: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
                let a = make_histogram(&(0..n).map(|_| rng.gen::<f64>() + 0.05).collect::<Vec<_>>())
                    .unwrap();
                let b = make_histogram(&(0..m).map(|_| rng.gen::<f64>() + 0.05).collect::<Vec<_>>())
                    .unwrap();
                let cost = Array2::from_shape_fn((n, m), |(i, j)| {
                    (xs[i] - ys[j]).abs().powi(p as i32)
                });
                let lp = solve_exact(&cost, &a, &b).unwrap();
                let fast = wasserstein_1d(&xs, &a, &ys, &b, p).unwrap();
                assert_abs_diff_eq!(fast.cost, lp.cost, epsilon = 1e-10);
                assert!(crate::check_coupling(fast.coupling.plan(), &a, &b, 1e-10).unwrap());
            }
        }
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        // Symmetry is exact; the triangle inequality holds for W_p, i.e. on
        // the p-th root of the returned cost.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for p in [1u32, 2] {
            for _ in 0..40 {
                let n = rng.gen_range(2..=5);
                let gen = |rng: &mut ChaCha8Rng| -> (Vec<f64>, Histogram) {
                    let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0).collect();
                    let w = make_histogram(
                        &(0..n).map(|_| rng.gen::<f64>() + 0.1).collect::<Vec<_>>(),
                    )
                    .unwrap();
                    (xs, w)
                };
                let (xs, a) = gen(&mut rng);
                let (ys, b) = gen(&mut rng);
                let (zs, c) = gen(&mut rng);
                let dxy = wasserstein_1d(&xs, &a, &ys, &b, p).unwrap().cost;
                let dyx = wasserstein_1d(&ys, &b, &xs, &a, p).unwrap().cost;
                assert_abs_diff_eq!(dxy, dyx, epsilon = 1e-12);
                let root = 1.0 / p as f64;
                let wxy = dxy.powf(root);
                let wxz = wasserstein_1d(&xs, &a, &zs, &c, p).unwrap().cost.powf(root);
                let wzy = wasserstein_1d(&zs, &c, &ys, &b, p).unwrap().cost.powf(root);
                assert!(wxy <= wxz + wzy + 1e-9);
            }
        }
    }

    #[test]
    fn monotone_cost_helper_agrees_with_full_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.gen_range(2..=7);
            let m = rng.gen_range(2..=7);
            let mut xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mut ys: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
            xs.sort_by(|u, w| u.partial_cmp(w).unwrap());
            ys.sort_by(|u, w| u.partial_cmp(w).unwrap());
            let a = make_histogram(&(0..n).map(|_| rng.gen::<f64>() + 0.1).collect::<Vec<_>>())
                .unwrap();
            let b = make_histogram(&(0..m).map(|_| rng.gen::<f64>() + 0.1).collect::<Vec<_>>())
                .unwrap();
            let fast = monotone_1d_cost(&xs, a.as_slice(), &ys, b.as_slice(), 2);
            let full = wasserstein_1d(&xs, &a, &ys, &b, 2).unwrap().cost;
            assert_abs_diff_eq!(fast, full, epsilon = 1e-12);
        }
    }
}
