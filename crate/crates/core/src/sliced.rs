//! Sliced Gromov-Wasserstein: the O(n) 1D closed form (identity or
//! anti-identity pairing of sorted samples), its Monte-Carlo slicing over
//! random directions, the rotation-invariant variant optimized over the
//! Stiefel manifold, and sliced Wasserstein for comparison.

use crate::euclidean::{stiefel_minimize, StiefelOptParams};
use crate::linear::monotone_1d_cost;
use crate::{Histogram, OtError, Result};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Which sorted pairing realizes the 1D GW optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    Identity,
    AntiIdentity,
}

/// Slicing configuration. `delta`, when set, is the `q x p` lifting applied
/// to the lower-dimensional cloud; the default is zero-padding.
#[derive(Debug, Clone)]
pub struct SliceConfig {
    pub num_projections: usize,
    pub seed: u64,
    pub delta: Option<Array2<f64>>,
}

impl SliceConfig {
    pub fn new(num_projections: usize, seed: u64) -> Self {
        SliceConfig {
            num_projections,
            seed,
            delta: None,
        }
    }
}

/// Moment bundle for the O(n) expansion of the paired quartic cost.
struct PairedMoments {
    /// sum_i x_i^2 z_i^2, sum_i x_i^2 z_i, sum_i x_i z_i^2, sum_i x_i z_i.
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

fn solo_moments(v: &[f64]) -> (f64, f64, f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut s4 = 0.0;
    for &x in v {
        let x2 = x * x;
        s1 += x;
        s2 += x2;
        s3 += x2 * x;
        s4 += x2 * x2;
    }
    (s1, s2, s3, s4)
}

fn paired_moments(xs: &[f64], zs_rev: bool, zs: &[f64]) -> PairedMoments {
    let n = xs.len();
    let mut m = PairedMoments {
        a: 0.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };
    for i in 0..n {
        let x = xs[i];
        let z = if zs_rev { zs[n - 1 - i] } else { zs[i] };
        m.a += x * x * z * z;
        m.b += x * x * z;
        m.c += x * z * z;
        m.d += x * z;
    }
    m
}

/// Squared-loss GW cost of the pairing `x_i <-> z_i` (both sorted), by
/// binomial expansion of `sum_ij ((x_i-x_j)^2 - (z_i-z_j)^2)^2 / n^2` into
/// moments computable in O(n).
fn paired_cost(
    n: usize,
    x_moments: (f64, f64, f64, f64),
    z_moments: (f64, f64, f64, f64),
    pm: &PairedMoments,
) -> f64 {
    let nf = n as f64;
    let (p1, p2, p3, p4) = x_moments;
    let (q1, q2, q3, q4) = z_moments;
    let fourth_x = 2.0 * nf * p4 - 8.0 * p3 * p1 + 6.0 * p2 * p2;
    let fourth_z = 2.0 * nf * q4 - 8.0 * q3 * q1 + 6.0 * q2 * q2;
    let cross = 2.0 * nf * pm.a - 4.0 * pm.b * q1 - 4.0 * pm.c * p1 + 2.0 * p2 * q2
        + 4.0 * pm.d * pm.d;
    ((fourth_x + fourth_z - 2.0 * cross) / (nf * nf)).max(0.0)
}

/// 1D GW between same-size uniform samples with squared Euclidean costs.
///
/// Sorts both inputs (after centering, which the cost is invariant to and
/// which conditions the moment sums), evaluates the closed-form cost for the
/// identity and anti-identity pairings in O(n), and returns the smaller,
/// preferring the identity on ties.
pub fn gw_1d_uniform(xs: &[f64], ys: &[f64]) -> Result<(f64, Pairing)> {
    if xs.len() != ys.len() {
        return Err(OtError::LengthMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(OtError::BadParams("empty input".into()));
    }
    let n = xs.len();
    let center = |v: &[f64]| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / n as f64;
        let mut out: Vec<f64> = v.iter().map(|x| x - mean).collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    };
    let xs = center(xs);
    let ys = center(ys);
    let xm = solo_moments(&xs);
    let ym = solo_moments(&ys);
    let id_cost = paired_cost(n, xm, ym, &paired_moments(&xs, false, &ys));
    let anti_cost = paired_cost(n, xm, ym, &paired_moments(&xs, true, &ys));
    if id_cost <= anti_cost {
        Ok((id_cost, Pairing::Identity))
    } else {
        Ok((anti_cost, Pairing::AntiIdentity))
    }
}

/// Reference O(n^2) evaluation of the paired squared-loss cost, used to
/// validate the moment expansion.
pub fn gw_1d_pair_cost_quadratic(xs: &[f64], zs: &[f64]) -> f64 {
    let n = xs.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dx = (xs[i] - xs[j]).powi(2);
            let dz = (zs[i] - zs[j]).powi(2);
            acc += (dx - dz) * (dx - dz);
        }
    }
    acc / (n * n) as f64
}

fn uniform_directions(dim: usize, count: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Array2::zeros((count, dim));
    for mut row in dirs.rows_mut() {
        loop {
            let v: Vec<f64> = (0..dim)
                .map(|_| rand_distr_standard_normal(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for (slot, x) in row.iter_mut().zip(v) {
                    *slot = x / norm;
                }
                break;
            }
        }
    }
    dirs
}

/// Box-Muller sample; avoids pulling a distributions crate for one density.
fn rand_distr_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn lift(x: &Array2<f64>, q: usize, delta: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    let p = x.ncols();
    match delta {
        Some(d) => {
            if d.nrows() != q || d.ncols() != p {
                return Err(OtError::ShapeMismatch(format!(
                    "delta {}x{} vs {}x{}",
                    d.nrows(),
                    d.ncols(),
                    q,
                    p
                )));
            }
            Ok(x.dot(&d.t()))
        }
        None => {
            if p > q {
                return Err(OtError::ShapeMismatch(format!(
                    "cannot zero-pad from dimension {p} down to {q}"
                )));
            }
            let mut out = Array2::zeros((x.nrows(), q));
            out.slice_mut(ndarray::s![.., ..p]).assign(x);
            Ok(out)
        }
    }
}

/// Sliced GW over explicitly provided directions (rows of `directions`).
/// This is the deterministic core of [`sgw`] and the test hook for pinning
/// single slices.
pub fn sgw_with_directions(
    x: &Array2<f64>,
    y: &Array2<f64>,
    directions: &Array2<f64>,
    delta: Option<&Array2<f64>>,
) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(OtError::UnsupportedWeights(format!(
            "sample counts {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let q = y.ncols();
    if directions.ncols() != q {
        return Err(OtError::ShapeMismatch(format!(
            "directions in dimension {} vs target {}",
            directions.ncols(),
            q
        )));
    }
    let lifted = lift(x, q, delta)?;
    let costs: Vec<f64> = directions
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|theta| {
            let theta = theta.to_owned();
            let xp: Vec<f64> = lifted.rows().into_iter().map(|r| r.dot(&theta)).collect();
            let yp: Vec<f64> = y.rows().into_iter().map(|r| r.dot(&theta)).collect();
            gw_1d_uniform(&xp, &yp).map(|(c, _)| c)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

/// Sliced Gromov-Wasserstein between uniform same-size clouds: the average
/// over `cfg.num_projections` seeded directions on the target sphere of the
/// 1D closed-form GW of the projections. Deterministic given the seed.
pub fn sgw(x: &Array2<f64>, y: &Array2<f64>, cfg: &SliceConfig) -> Result<f64> {
    if cfg.num_projections == 0 {
        return Err(OtError::BadParams("need at least one projection".into()));
    }
    let dirs = uniform_directions(y.ncols(), cfg.num_projections, cfg.seed);
    sgw_with_directions(x, y, &dirs, cfg.delta.as_ref())
}

/// Rotation-invariant sliced GW: minimizes the sliced cost over Stiefel
/// liftings `Delta^T Delta = I_p`, starting from zero-padding. Projections
/// are drawn once per call and shared across optimizer steps. Returns the
/// optimized value and the lifting that achieves it.
pub fn risgw(
    x: &Array2<f64>,
    y: &Array2<f64>,
    cfg: &SliceConfig,
    opt: &StiefelOptParams,
) -> Result<(f64, Array2<f64>)> {
    let (p, q) = (x.ncols(), y.ncols());
    if p > q {
        return Err(OtError::ShapeMismatch(format!(
            "risgw needs p <= q, got {p} > {q}"
        )));
    }
    if x.nrows() != y.nrows() {
        return Err(OtError::UnsupportedWeights(format!(
            "sample counts {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let dirs = uniform_directions(q, cfg.num_projections.max(1), cfg.seed);
    let y_proj: Vec<Vec<f64>> = dirs
        .rows()
        .into_iter()
        .map(|theta| y.rows().into_iter().map(|r| r.dot(&theta)).collect())
        .collect();

    let objective = |delta: &Array2<f64>| -> f64 {
        sgw_with_directions(x, y, &dirs, Some(delta)).expect("shapes fixed by caller")
    };
    // Envelope gradient: per slice, hold the optimal pairing fixed and
    // differentiate the quartic in the projected source points.
    let gradient = |delta: &Array2<f64>| -> Array2<f64> {
        let lifted = x.dot(&delta.t());
        let mut grad = Array2::<f64>::zeros((q, p));
        let slice_grads: Vec<Array2<f64>> = dirs
            .rows()
            .into_iter()
            .enumerate()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(l, theta)| {
                let theta = theta.to_owned();
                let u: Vec<f64> = lifted.rows().into_iter().map(|r| r.dot(&theta)).collect();
                let g_u = paired_cost_grad(&u, &y_proj[*l]);
                // d u_i / d Delta = theta x_i^T.
                let mut xg = Array1::<f64>::zeros(p);
                for (i, gi) in g_u.iter().enumerate() {
                    for c in 0..p {
                        xg[c] += gi * x[[i, c]];
                    }
                }
                let mut slice_grad = Array2::<f64>::zeros((q, p));
                for r in 0..q {
                    for c in 0..p {
                        slice_grad[[r, c]] = theta[r] * xg[c];
                    }
                }
                slice_grad
            })
            .collect();
        for sg in slice_grads {
            grad = grad + sg;
        }
        grad / dirs.nrows() as f64
    };

    let mut init = Array2::zeros((q, p));
    for i in 0..p {
        init[[i, i]] = 1.0;
    }
    let (delta_opt, _) = stiefel_minimize(objective, gradient, (q, p), opt, Some(&init))?;
    let value = sgw_with_directions(x, y, &dirs, Some(&delta_opt))?;
    let init_value = sgw_with_directions(x, y, &dirs, Some(&init))?;
    if init_value < value {
        return Ok((init_value, init));
    }
    Ok((value, delta_opt))
}

/// Gradient of the per-slice cost with respect to the projected source
/// points, holding the sort order and pairing fixed (envelope rule). O(n)
/// via moment sums.
fn paired_cost_grad(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len();
    let nf = n as f64;
    // Matched target value for each source index under the optimal pairing.
    let mut order_u: Vec<usize> = (0..n).collect();
    order_u.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap());
    let mut sorted_v: Vec<f64> = v.to_vec();
    sorted_v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sorted_u: Vec<f64> = order_u.iter().map(|&i| u[i]).collect();
    let (_, pairing) = gw_1d_uniform(u, v).expect("same lengths");
    let mut matched = vec![0.0; n];
    for (rank, &src) in order_u.iter().enumerate() {
        matched[src] = match pairing {
            Pairing::Identity => sorted_v[rank],
            Pairing::AntiIdentity => sorted_v[n - 1 - rank],
        };
    }
    let _ = sorted_u;

    let s1: f64 = u.iter().sum();
    let s2: f64 = u.iter().map(|x| x * x).sum();
    let s3: f64 = u.iter().map(|x| x * x * x).sum();
    let z1: f64 = matched.iter().sum();
    let z2: f64 = matched.iter().map(|x| x * x).sum();
    let zu: f64 = u.iter().zip(&matched).map(|(x, z)| x * z).sum();
    let z2u: f64 = u.iter().zip(&matched).map(|(x, z)| x * z * z).sum();

    (0..n)
        .map(|i| {
            let ui = u[i];
            let zi = matched[i];
            // d/du_i sum_j (u_i - u_j)^4 term (doubled for symmetry) minus
            // the cross term with the matched squared differences.
            let quart = nf * ui.powi(3) - 3.0 * ui * ui * s1 + 3.0 * ui * s2 - s3;
            let cross = zi * zi * (nf * ui - s1) - 2.0 * zi * (ui * z1 - zu)
                + (ui * z2 - z2u);
            (8.0 / (nf * nf)) * (quart - cross)
        })
        .collect()
}

/// Sliced Wasserstein `SW_p^p`: Monte-Carlo average over seeded directions
/// of the 1D `W_p^p` between the projections, uniform weights. Cloud sizes
/// may differ; ambient dimensions must match (or a `delta` lifting must be
/// provided in the config).
pub fn sliced_wasserstein(
    x: &Array2<f64>,
    y: &Array2<f64>,
    p_exp: u32,
    cfg: &SliceConfig,
) -> Result<f64> {
    if p_exp == 0 {
        return Err(OtError::BadParams("exponent must be >= 1".into()));
    }
    if cfg.num_projections == 0 {
        return Err(OtError::BadParams("need at least one projection".into()));
    }
    let q = y.ncols();
    if cfg.delta.is_none() && x.ncols() != q {
        return Err(OtError::ShapeMismatch(format!(
            "ambient dimensions {} vs {}",
            x.ncols(),
            q
        )));
    }
    let lifted = lift(x, q, cfg.delta.as_ref())?;
    let dirs = uniform_directions(q, cfg.num_projections, cfg.seed);
    let wa = Histogram::uniform(lifted.nrows());
    let wb = Histogram::uniform(y.nrows());
    let costs: Vec<f64> = dirs
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|theta| {
            let theta = theta.to_owned();
            let mut xp: Vec<f64> = lifted.rows().into_iter().map(|r| r.dot(&theta)).collect();
            let mut yp: Vec<f64> = y.rows().into_iter().map(|r| r.dot(&theta)).collect();
            xp.sort_by(|a, b| a.partial_cmp(b).unwrap());
            yp.sort_by(|a, b| a.partial_cmp(b).unwrap());
            monotone_1d_cost(&xp, wa.as_slice(), &yp, wb.as_slice(), p_exp)
        })
        .collect();
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn brute_force_gw_1d(xs: &[f64], ys: &[f64]) -> f64 {
        // Full permutation enumeration of the squared-loss objective.
        let n = xs.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut idx, 0, &mut |perm| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let dx = (xs[i] - xs[j]).powi(2);
                    let dy = (ys[perm[i]] - ys[perm[j]]).powi(2);
                    acc += (dx - dy) * (dx - dy);
                }
            }
            best = best.min(acc / (n * n) as f64);
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
    fn identical_inputs_identity_zero() {
        let xs = [0.4, -1.0, 2.2];
        let (cost, pairing) = gw_1d_uniform(&xs, &xs).unwrap();
        assert_abs_diff_eq!(cost, 0.0, epsilon = 1e-12);
        assert_eq!(pairing, Pairing::Identity);
    }

    #[test]
    fn reflection_gives_anti_identity_zero() {
        let xs = [0.1, 0.5, 1.7, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| -x).collect();
        let (cost, pairing) = gw_1d_uniform(&xs, &ys).unwrap();
        assert!(cost <= 1e-12, "cost {cost}");
        assert_eq!(pairing, Pairing::AntiIdentity);
    }

    #[test]
    fn matches_permutation_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let n = rng.gen_range(2..=7);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let (fast, _) = gw_1d_uniform(&xs, &ys).unwrap();
            let brute = brute_force_gw_1d(&xs, &ys);
            assert!(
                (fast - brute).abs() <= 1e-10 * brute.max(1.0),
                "fast {fast} vs brute {brute}"
            );
        }
    }

    #[test]
    fn moment_expansion_matches_quadratic_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3usize, 17, 80, 200] {
            let mut xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let mut ys: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let xm = solo_moments(&xs);
            let ym = solo_moments(&ys);
            let fast = paired_cost(n, xm, ym, &paired_moments(&xs, false, &ys));
            let slow = gw_1d_pair_cost_quadratic(&xs, &ys);
            assert!(
                (fast - slow).abs() <= 1e-8 * slow.max(1.0),
                "n={n}: fast {fast} vs slow {slow}"
            );
        }
    }

    #[test]
    fn sgw_self_is_zero_and_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((20, 3), |_| rng.gen::<f64>());
        let cfg = SliceConfig::new(16, 42);
        let self_cost = sgw(&x, &x, &cfg).unwrap();
        assert_abs_diff_eq!(self_cost, 0.0, epsilon = 1e-18);

        let mut shifted = x.clone();
        for mut row in shifted.rows_mut() {
            row[0] += 5.0;
            row[1] -= 2.0;
            row[2] += 0.5;
        }
        let cost = sgw(&x, &shifted, &cfg).unwrap();
        assert!(cost.abs() <= 1e-12, "translated cost {cost}");
    }

    #[test]
    fn sgw_single_slice_reduces_to_1d() {
        // 1D data embedded in 2D with the projection pinned to e1.
        let xs = [0.0, 0.7, 1.9, 3.1];
        let ys = [0.2, 0.9, 1.1, 2.5];
        let x2 = Array2::from_shape_fn((4, 2), |(i, c)| if c == 0 { xs[i] } else { 0.0 });
        let y2 = Array2::from_shape_fn((4, 2), |(i, c)| if c == 0 { ys[i] } else { 0.0 });
        let dirs = array![[1.0, 0.0]];
        let sliced = sgw_with_directions(&x2, &y2, &dirs, None).unwrap();
        let (direct, _) = gw_1d_uniform(&xs, &ys).unwrap();
        assert_abs_diff_eq!(sliced, direct, epsilon = 1e-12);
    }

    #[test]
    fn sgw_rejects_size_mismatch() {
        let x = Array2::<f64>::zeros((3, 2));
        let y = Array2::<f64>::zeros((4, 2));
        assert!(matches!(
            sgw(&x, &y, &SliceConfig::new(4, 1)),
            Err(OtError::UnsupportedWeights(_))
        ));
    }

    #[test]
    fn sgw_deterministic_and_symmetric_with_shared_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = Array2::from_shape_fn((12, 2), |_| rng.gen::<f64>());
        let y = Array2::from_shape_fn((12, 2), |_| rng.gen::<f64>());
        let cfg = SliceConfig::new(24, 7);
        let c1 = sgw(&x, &y, &cfg).unwrap();
        let c2 = sgw(&x, &y, &cfg).unwrap();
        assert_eq!(c1, c2);
        // Same-dimension symmetric evaluation with shared directions.
        let c3 = sgw(&y, &x, &cfg).unwrap();
        assert_abs_diff_eq!(c1, c3, epsilon = 1e-12);
    }

    #[test]
    fn sgw_triangle_inequality_with_shared_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let n = 10;
            let x = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>());
            let y = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>());
            let z = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>());
            let dirs = uniform_directions(2, 32, 5);
            let dxy = sgw_with_directions(&x, &y, &dirs, None).unwrap().sqrt();
            let dxz = sgw_with_directions(&x, &z, &dirs, None).unwrap().sqrt();
            let dzy = sgw_with_directions(&z, &y, &dirs, None).unwrap().sqrt();
            assert!(dxy <= dxz + dzy + 1e-9, "{dxy} > {dxz} + {dzy}");
        }
    }

    #[test]
    fn risgw_self_is_zero_at_identity_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x = Array2::from_shape_fn((10, 2), |_| rng.gen::<f64>());
        let cfg = SliceConfig::new(8, 3);
        let (value, delta) = risgw(&x, &x, &cfg, &StiefelOptParams::default()).unwrap();
        assert!(value <= 1e-9, "risgw self value {value}");
        let gram = delta.t().dot(&delta);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[[i, j]], want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn risgw_no_worse_than_padded_sgw() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = Array2::from_shape_fn((8, 2), |_| rng.gen::<f64>());
        // 3D target: padded x rotated in 3D.
        let x3 = lift(&x, 3, None).unwrap();
        let angle: f64 = 0.9;
        let rot = array![
            [1.0, 0.0, 0.0],
            [0.0, angle.cos(), -angle.sin()],
            [0.0, angle.sin(), angle.cos()]
        ];
        let y = x3.dot(&rot.t());
        let cfg = SliceConfig::new(12, 17);
        let padded = sgw(&x, &y, &cfg).unwrap();
        let (optimized, _) = risgw(&x, &y, &cfg, &StiefelOptParams::default()).unwrap();
        assert!(
            optimized <= padded + 1e-9,
            "risgw {optimized} vs sgw {padded}"
        );
    }

    #[test]
    fn risgw_envelope_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = Array2::from_shape_fn((7, 2), |_| rng.gen::<f64>());
        let y = Array2::from_shape_fn((7, 3), |_| rng.gen::<f64>());
        let dirs = uniform_directions(3, 6, 11);
        let y_proj: Vec<Vec<f64>> = dirs
            .rows()
            .into_iter()
            .map(|theta| y.rows().into_iter().map(|r| r.dot(&theta)).collect())
            .collect();

        // A generic Stiefel point away from axis alignment.
        let raw = Array2::from_shape_fn((3, 2), |_| rng.gen::<f64>() - 0.5);
        let delta = crate::linalg::thin_q(&raw).unwrap();

        let eval = |d: &Array2<f64>| sgw_with_directions(&x, &y, &dirs, Some(d)).unwrap();
        // Analytic envelope gradient.
        let lifted = x.dot(&delta.t());
        let mut grad = Array2::<f64>::zeros((3, 2));
        for (l, theta) in dirs.rows().into_iter().enumerate() {
            let u: Vec<f64> = lifted.rows().into_iter().map(|r| r.dot(&theta)).collect();
            let g_u = paired_cost_grad(&u, &y_proj[l]);
            for r in 0..3 {
                for c in 0..2 {
                    let mut acc = 0.0;
                    for (i, gi) in g_u.iter().enumerate() {
                        acc += gi * x[[i, c]];
                    }
                    grad[[r, c]] += theta[r] * acc;
                }
            }
        }
        grad = grad / dirs.nrows() as f64;

        let step = 1e-4;
        for r in 0..3 {
            for c in 0..2 {
                let mut dp = delta.clone();
                dp[[r, c]] += step;
                let mut dm = delta.clone();
                dm[[r, c]] -= step;
                let fd = (eval(&dp) - eval(&dm)) / (2.0 * step);
                let denom = fd.abs().max(grad[[r, c]].abs()).max(1e-6);
                assert!(
                    (grad[[r, c]] - fd).abs() / denom <= 1e-3,
                    "grad[{r},{c}]={} vs fd={}",
                    grad[[r, c]],
                    fd
                );
            }
        }
    }

    #[test]
    fn sliced_wasserstein_self_zero_translation_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = Array2::from_shape_fn((15, 3), |_| rng.gen::<f64>());
        let cfg = SliceConfig::new(20, 9);
        assert_abs_diff_eq!(sliced_wasserstein(&x, &x, 2, &cfg).unwrap(), 0.0, epsilon = 1e-18);

        let mut shifted = x.clone();
        for mut row in shifted.rows_mut() {
            row[0] += 2.0;
        }
        let sw = sliced_wasserstein(&x, &shifted, 2, &cfg).unwrap();
        assert!(sw >= 1e-6, "sw after translation {sw}");
        // The same translation leaves sliced GW unchanged.
        let sgw_val = sgw(&x, &shifted, &cfg).unwrap();
        assert!(sgw_val <= 1e-12);
    }

    #[test]
    fn sliced_wasserstein_between_diracs_matches_projection_average() {
        // Point masses at 0 and v (duplicated so n > 1): the per-slice cost
        // is |<v, theta>|^p; recompute the Monte-Carlo average directly.
        let v = [1.5, -0.5];
        let x = Array2::zeros((2, 2));
        let y = Array2::from_shape_fn((2, 2), |(_, c)| v[c]);
        let cfg = SliceConfig::new(64, 13);
        let sw = sliced_wasserstein(&x, &y, 2, &cfg).unwrap();
        let dirs = uniform_directions(2, 64, 13);
        let expected: f64 = dirs
            .rows()
            .into_iter()
            .map(|theta| (v[0] * theta[0] + v[1] * theta[1]).powi(2))
            .sum::<f64>()
            / 64.0;
        assert_abs_diff_eq!(sw, expected, epsilon = 1e-12);
    }
}
