//! Dense linear-algebra helpers: symmetric eigendecomposition, PSD matrix
//! square roots, and thin QR, bridged to `nalgebra`.

use crate::{OtError, Result};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// Returns `(values, vectors)` where column `k` of `vectors` is the
/// eigenvector for `values[k]`. Columns are sign-fixed so the first entry
/// with magnitude above 1e-12 is positive, which keeps results reproducible
/// across runs.
pub fn eigh(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(OtError::ShapeMismatch(format!(
            "eigh needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let sym = to_nalgebra(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sym.eigenvalues[i].partial_cmp(&sym.eigenvalues[j]).unwrap());

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (k, &src) in order.iter().enumerate() {
        values[k] = sym.eigenvalues[src];
        let col = sym.eigenvectors.column(src);
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-12)
            .map(|v| if *v < 0.0 { -1.0 } else { 1.0 })
            .unwrap_or(1.0);
        for i in 0..n {
            vectors[[i, k]] = sign * col[i];
        }
    }
    Ok((values, vectors))
}

/// Applies `f` to the eigenvalues of a symmetric matrix: `V f(D) V^T`.
pub fn sym_fn(m: &Array2<f64>, f: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let (values, vectors) = eigh(m)?;
    let n = values.len();
    let mut scaled = vectors.clone();
    for k in 0..n {
        let fv = f(values[k]);
        for i in 0..n {
            scaled[[i, k]] *= fv;
        }
    }
    Ok(scaled.dot(&vectors.t()))
}

/// Square root of a PSD matrix, flooring slightly negative eigenvalues at 0.
pub fn sqrtm_psd(m: &Array2<f64>) -> Result<Array2<f64>> {
    sym_fn(m, |v| v.max(0.0).sqrt())
}

/// Thin QR factor of an `n x p` matrix (`n >= p`), with the sign convention
/// that the diagonal of R is nonnegative. Used as a Stiefel retraction.
pub fn thin_q(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, p) = (m.nrows(), m.ncols());
    if n < p {
        return Err(OtError::ShapeMismatch(format!(
            "thin_q needs n >= p, got {}x{}",
            n, p
        )));
    }
    let qr = to_nalgebra(m).qr();
    let r = qr.r();
    let q = qr.q();
    let mut q = from_nalgebra(&q);
    for k in 0..p {
        if r[(k, k)] < 0.0 {
            for i in 0..n {
                q[[i, k]] = -q[[i, k]];
            }
        }
    }
    Ok(q)
}

/// Pairwise squared Euclidean distance matrix between the rows of `x` and `y`.
pub fn sq_dist_matrix(x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let m = y.nrows();
    let xs: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let ys: Vec<f64> = y.rows().into_iter().map(|r| r.dot(&r)).collect();
    let cross = x.dot(&y.t());
    let mut d = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            d[[i, j]] = (xs[i] + ys[j] - 2.0 * cross[[i, j]]).max(0.0);
        }
    }
    d
}

/// Pairwise Euclidean distance matrix between the rows of `x` and `y`.
pub fn dist_matrix(x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    sq_dist_matrix(x, y).mapv(f64::sqrt)
}

/// Frobenius inner product.
pub fn frob(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Max absolute entry of a matrix.
pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
