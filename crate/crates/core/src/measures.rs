//! Core data model: histograms, discrete measures, couplings, structured
//! objects (graphs), raw data matrices, and Gaussian measures.
//!
//! Everything here is immutable after construction and safe to share across
//! threads.

use crate::{OtError, Result};
use ndarray::{Array1, Array2};

/// A probability vector: nonnegative entries summing to one.
///
/// Construction renormalizes, so file-sourced weights with rounding noise are
/// accepted as long as they are nonnegative with positive total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram(Array1<f64>);

impl Histogram {
    pub fn new(raw: Array1<f64>) -> Result<Self> {
        for &w in raw.iter() {
            if w < 0.0 {
                return Err(OtError::NegativeWeight(w));
            }
            if !w.is_finite() {
                return Err(OtError::NonFinite);
            }
        }
        let total: f64 = raw.sum();
        if total <= 0.0 {
            return Err(OtError::ZeroMass);
        }
        Ok(Histogram(raw / total))
    }

    pub fn uniform(n: usize) -> Self {
        Histogram(Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("histogram is contiguous")
    }
}

/// Builds a [`Histogram`] from raw nonnegative weights.
pub fn make_histogram(raw: &[f64]) -> Result<Histogram> {
    Histogram::new(Array1::from_vec(raw.to_vec()))
}

/// A weighted point set: one point per row of `support`.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    support: Array2<f64>,
    weights: Histogram,
}

impl DiscreteMeasure {
    pub fn new(support: Array2<f64>, weights: Histogram) -> Result<Self> {
        if support.nrows() != weights.len() {
            return Err(OtError::LengthMismatch {
                expected: support.nrows(),
                actual: weights.len(),
            });
        }
        Ok(DiscreteMeasure { support, weights })
    }

    pub fn uniform(support: Array2<f64>) -> Self {
        let n = support.nrows();
        DiscreteMeasure {
            support,
            weights: Histogram::uniform(n),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn support(&self) -> &Array2<f64> {
        &self.support
    }

    pub fn weights(&self) -> &Histogram {
        &self.weights
    }
}

/// A transport plan with its declared marginals, so validity can be checked
/// after any solver without carrying the original problem around.
#[derive(Debug, Clone)]
pub struct Coupling {
    plan: Array2<f64>,
    row_marginal: Histogram,
    col_marginal: Histogram,
}

/// Max-abs marginal residual and most-negative entry of a candidate plan.
fn plan_residuals(plan: &Array2<f64>, a: &Histogram, b: &Histogram) -> (f64, f64) {
    let mut worst = 0.0_f64;
    for (i, row) in plan.rows().into_iter().enumerate() {
        worst = worst.max((row.sum() - a.weights()[i]).abs());
    }
    for (j, col) in plan.columns().into_iter().enumerate() {
        worst = worst.max((col.sum() - b.weights()[j]).abs());
    }
    let min_entry = plan.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));
    (worst, min_entry)
}

impl Coupling {
    /// Validates marginals to 1e-8 (absolute, per entry) and clamps entries
    /// in `[-1e-15, 0)` to exactly zero. More negative entries are rejected.
    pub fn new(plan: Array2<f64>, row_marginal: Histogram, col_marginal: Histogram) -> Result<Self> {
        Self::with_tolerance(plan, row_marginal, col_marginal, 1e-8)
    }

    pub fn with_tolerance(
        mut plan: Array2<f64>,
        row_marginal: Histogram,
        col_marginal: Histogram,
        tol: f64,
    ) -> Result<Self> {
        if plan.nrows() != row_marginal.len() || plan.ncols() != col_marginal.len() {
            return Err(OtError::ShapeMismatch(format!(
                "plan {}x{} vs marginals {} / {}",
                plan.nrows(),
                plan.ncols(),
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        let (worst, min_entry) = plan_residuals(&plan, &row_marginal, &col_marginal);
        if min_entry < -1e-15 {
            return Err(OtError::NegativeWeight(min_entry));
        }
        if worst > tol {
            return Err(OtError::NumericalFailure(format!(
                "marginal residual {worst:.3e} exceeds tolerance {tol:.3e}"
            )));
        }
        plan.mapv_inplace(|v| v.max(0.0));
        Ok(Coupling {
            plan,
            row_marginal,
            col_marginal,
        })
    }

    /// Wraps a solver iterate without checking marginals. Entries below zero
    /// are still clamped. Intended for unconverged or iterative output where
    /// the residual is reported separately.
    pub fn from_iterate(mut plan: Array2<f64>, row_marginal: Histogram, col_marginal: Histogram) -> Self {
        plan.mapv_inplace(|v| v.max(0.0));
        Coupling {
            plan,
            row_marginal,
            col_marginal,
        }
    }

    /// Independence coupling `a b^T`.
    pub fn product(a: &Histogram, b: &Histogram) -> Self {
        let plan = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| {
            a.weights()[i] * b.weights()[j]
        });
        Coupling {
            plan,
            row_marginal: a.clone(),
            col_marginal: b.clone(),
        }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn row_marginal(&self) -> &Histogram {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Histogram {
        &self.col_marginal
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.plan.nrows(), self.plan.ncols())
    }

    /// Checks this coupling's plan against its declared marginals.
    pub fn is_valid(&self, tol: f64) -> bool {
        let (worst, min_entry) = plan_residuals(&self.plan, &self.row_marginal, &self.col_marginal);
        worst <= tol && min_entry >= -tol
    }
}

/// Product coupling `a b^T`, always a valid element of the transport polytope.
pub fn product_coupling(a: &Histogram, b: &Histogram) -> Coupling {
    Coupling::product(a, b)
}

/// True iff `plan` has marginals `(a, b)` within `tol` (max-abs residual)
/// and its smallest entry is at least `-tol`.
pub fn check_coupling(plan: &Array2<f64>, a: &Histogram, b: &Histogram, tol: f64) -> Result<bool> {
    if plan.nrows() != a.len() || plan.ncols() != b.len() {
        return Err(OtError::ShapeMismatch(format!(
            "plan {}x{} vs marginals {} / {}",
            plan.nrows(),
            plan.ncols(),
            a.len(),
            b.len()
        )));
    }
    let (worst, min_entry) = plan_residuals(plan, a, b);
    Ok(worst <= tol && min_entry >= -tol)
}

/// Node features of a structured object: dense real vectors or discrete
/// label codes (possibly multi-level, e.g. stacked WL codes).
#[derive(Debug, Clone)]
pub enum Features {
    Dense(Array2<f64>),
    Labels(Array2<i64>),
}

impl Features {
    pub fn len(&self) -> usize {
        match self {
            Features::Dense(m) => m.nrows(),
            Features::Labels(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Single-column label features from a flat label vector.
    pub fn from_labels(labels: &[i64]) -> Self {
        Features::Labels(
            Array2::from_shape_vec((labels.len(), 1), labels.to_vec())
                .expect("label vector reshapes to a column"),
        )
    }
}

/// A structured object: pairwise structure matrix `C`, node features, and a
/// node histogram. Graphs enter as (shortest-path or adjacency) matrices.
#[derive(Debug, Clone)]
pub struct StructuredObject {
    structure: Array2<f64>,
    features: Features,
    weights: Histogram,
}

impl StructuredObject {
    /// `structure` must be square and symmetric within 1e-10; the stored
    /// matrix is `(C + C^T)/2`. Larger asymmetry is an error.
    pub fn new(structure: Array2<f64>, features: Features, weights: Histogram) -> Result<Self> {
        let n = weights.len();
        if structure.nrows() != n || structure.ncols() != n {
            return Err(OtError::ShapeMismatch(format!(
                "structure {}x{} vs {} nodes",
                structure.nrows(),
                structure.ncols(),
                n
            )));
        }
        if features.len() != n {
            return Err(OtError::LengthMismatch {
                expected: n,
                actual: features.len(),
            });
        }
        let mut asym = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((structure[[i, j]] - structure[[j, i]]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(OtError::ShapeMismatch(format!(
                "structure asymmetry {asym:.3e} exceeds 1e-10"
            )));
        }
        let sym = (&structure + &structure.t()) * 0.5;
        Ok(StructuredObject {
            structure: sym,
            features,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn structure(&self) -> &Array2<f64> {
        &self.structure
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn weights(&self) -> &Histogram {
        &self.weights
    }
}

/// A raw sample-by-feature matrix with histograms on both axes.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
    sample_weights: Histogram,
    feature_weights: Histogram,
}

impl DataMatrix {
    pub fn new(
        values: Array2<f64>,
        sample_weights: Histogram,
        feature_weights: Histogram,
    ) -> Result<Self> {
        if values.nrows() != sample_weights.len() {
            return Err(OtError::LengthMismatch {
                expected: values.nrows(),
                actual: sample_weights.len(),
            });
        }
        if values.ncols() != feature_weights.len() {
            return Err(OtError::LengthMismatch {
                expected: values.ncols(),
                actual: feature_weights.len(),
            });
        }
        Ok(DataMatrix {
            values,
            sample_weights,
            feature_weights,
        })
    }

    pub fn uniform(values: Array2<f64>) -> Self {
        let (n, d) = (values.nrows(), values.ncols());
        DataMatrix {
            values,
            sample_weights: Histogram::uniform(n),
            feature_weights: Histogram::uniform(d),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn sample_weights(&self) -> &Histogram {
        &self.sample_weights
    }

    pub fn feature_weights(&self) -> &Histogram {
        &self.feature_weights
    }
}

/// Gaussian measure `N(mean, covariance)` with a symmetric PSD covariance.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    mean: Array1<f64>,
    covariance: Array2<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let p = mean.len();
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(OtError::ShapeMismatch(format!(
                "covariance {}x{} vs mean of length {}",
                covariance.nrows(),
                covariance.ncols(),
                p
            )));
        }
        let mut asym = 0.0_f64;
        for i in 0..p {
            for j in (i + 1)..p {
                asym = asym.max((covariance[[i, j]] - covariance[[j, i]]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(OtError::ShapeMismatch(format!(
                "covariance asymmetry {asym:.3e} exceeds 1e-10"
            )));
        }
        let sym = (&covariance + &covariance.t()) * 0.5;
        let (values, _) = crate::linalg::eigh(&sym)?;
        if values[0] < -1e-10 {
            return Err(OtError::NegativeWeight(values[0]));
        }
        Ok(GaussianMeasure {
            mean,
            covariance: sym,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }
}
