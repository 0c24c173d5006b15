//! Error type shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// All failure modes of the math core.
///
/// Validation failures are deliberately loud: silent repairs (symmetrizing a
/// slightly non-Hermitian matrix, renormalizing a drifting trace) mask bugs in
/// the caller, so repairs only ever happen through explicit methods.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix dimension {0} exceeds the supported maximum {1}")]
    DimensionTooLarge(usize, usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not Hermitian: max |a_ij - conj(a_ji)| = {0:.3e}")]
    NotHermitian(f64),
    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("not a valid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("class {0} has no members")]
    EmptyClass(u32),
    #[error("feature value on item {item} lies inside the tie tolerance: |{value:.3e}| < 1e-12")]
    FeatureTie { item: usize, value: f64 },
    #[error("feature partition cell ({class_sign:+},{feature_sign:+}) is empty")]
    EmptyPartitionCell { class_sign: i8, feature_sign: i8 },
    #[error("Kraus completeness violated: max |sum E'E - I| entry = {0:.3e}")]
    IncompleteKraus(f64),
    #[error("invalid POVM: {0}")]
    InvalidPovm(String),
    #[error("decision tie within tolerance: margin {0:.3e}")]
    ScoreTie(f64),
    #[error("ground-truth rule undefined on a state: {0}")]
    OracleUndefined(String),
    #[error("operation requires binary +1/-1 labels")]
    NonBinaryLabels,
    #[error("unmatchable partition sizes; residual items {0:?}")]
    UnmatchablePartition(Vec<usize>),
    #[error("ensemble map is not total: expected {expected} images, got {got}")]
    PartialEnsembleMap { expected: usize, got: usize },
    #[error("degenerate first channel: response slope is zero")]
    DegenerateFirstChannel,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown scenario id {0} (supported: 1..=12)")]
    UnknownScenario(u32),
    #[error("unknown scenario parameter `{0}`")]
    UnknownScenarioParameter(String),
}
