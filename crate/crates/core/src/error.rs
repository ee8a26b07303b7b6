//! Error type shared by all solvers.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OtError {
    #[error("negative weight encountered: {0}")]
    NegativeWeight(f64),
    #[error("weight vector has zero total mass")]
    ZeroMass,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("non-finite value produced during iteration")]
    NonFinite,
    #[error("covariance matrix is singular within the conditioning threshold")]
    SingularCovariance,
    #[error("unsupported loss exponent {0}")]
    UnsupportedExponent(u32),
    #[error("graph is disconnected: no path between nodes {0} and {1}")]
    DisconnectedGraph(usize, usize),
    #[error("every candidate threshold disconnects the graph")]
    NoConnectedCandidate,
    #[error("cannot mix dense features with discrete labels")]
    MixedFeatureKinds,
    #[error("uniform weights and equal sizes required: {0}")]
    UnsupportedWeights(String),
    #[error("line search failed to make progress after {0} backtracks")]
    LineSearchFailure(usize),
    #[error("invalid parameter: {0}")]
    BadParams(String),
}
