//! Verification laboratory for robustness/accuracy trade-offs of classical
//! and quantum classifiers.
//!
//! The crate provides the math core: dense complex-matrix numerics with a
//! Hermitian eigensolver, density matrices and labeled ensembles, Kraus noise
//! channels, deterministic and stochastic (POVM) classifiers, the robustness
//! metric zoo (corrupted-instance, prediction-change, and error-region
//! variants plus adversarial radii), and closed-form relation checkers that
//! are cross-validated against brute-force oracles. Published constants that
//! disagree with the oracles are surfaced through erratum flags rather than
//! silently corrected.
//!
//! Everything here is `no_std + alloc`; IO, file formats, and the CLI live in
//! the companion `rtlab` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod channels;
pub mod classifiers;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod relations;
pub mod scenarios;
pub mod states;

pub use channels::{KrausChannel, NamedChannel, Perturbation, PerturbationClass, PerturbationType};
pub use classifiers::{Classifier, Decision, ScoreClassifier, ScoreFn, StochasticClassifier};
pub use error::{Error, Result};
pub use numerics::{
    fidelity, hermitian_eigendecomposition, trace_distance, ComplexMatrix, Eigendecomposition,
};
pub use relations::{AssumptionCheck, JointLabelModel, RelationReport};
pub use scenarios::{
    build_scenario, run_scenario, Assertion, AssertionBasis, Scenario, ScenarioOutcome,
};
pub use states::{DensityMatrix, GroundTruth, Label, LabeledEnsemble, WeightedState};

/// Default tolerance for closed-form vs oracle agreement checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
