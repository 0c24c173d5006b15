//! JSON run configuration: schema types, strict validation, and conversion
//! into core objects.
//!
//! The schema is deliberately small. States come in exactly two encodings —
//! a dense complex matrix as nested `[re, im]` pairs, or a qubit Bloch pure
//! state `{"theta": .., "phi": ..}` — and both normalize to the same internal
//! density matrix. Unknown keys are rejected everywhere, and every semantic
//! error names the JSON path it was found under so configs can be fixed
//! without guesswork.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use rtlab_core::channels::{pauli_z, KrausChannel};
use rtlab_core::metrics::LossKind;
use rtlab_core::states::{GroundTruth, HemisphereOracle, ObservableSignOracle};
use rtlab_core::{
    Classifier, ComplexMatrix, DensityMatrix, Label, LabeledEnsemble, NamedChannel, Perturbation,
    ScoreClassifier, ScoreFn, StochasticClassifier, WeightedState,
};

use crate::error::{CliError, CliResult};

/// Dense complex matrix as nested rows of `[re, im]` pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

/// One state, in either of the two supported encodings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    /// Full density matrix, `matrix[i][j] = [re, im]`.
    Matrix(MatrixJson),
    /// Qubit pure state `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`.
    Bloch { theta: f64, phi: f64 },
}

/// One weighted, labeled ensemble member.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemConfig {
    pub weight: f64,
    /// `1..=classes`, or `-1` as an alias for class 2 when `classes == 2`.
    pub label: i64,
    pub state: StateConfig,
}

/// The labeled input ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub classes: u32,
    pub items: Vec<ItemConfig>,
}

/// The classifier under test.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierConfig {
    /// Stochastic classifier from a POVM; effect `i` answers class `i + 1`.
    Povm { effects: Vec<MatrixJson> },
    /// Binary threshold on `Tr(observable * rho)`.
    SignObservable {
        observable: MatrixJson,
        #[serde(default)]
        threshold: f64,
    },
    /// Argmax of fidelities to fixed per-class centroid states.
    FidelityCentroids { centroids: Vec<StateConfig> },
}

/// The perturbation applied to every state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    /// Leaves every state unchanged.
    Identity,
    /// `(1-p) rho + p X rho X`.
    BitFlip { p: f64 },
    /// `(1-p) rho + p Z rho Z`.
    PhaseFlip { p: f64 },
    /// `(1-p) rho + p I/2`.
    Depolarizing { p: f64 },
    /// Mixture of I, X, Y, Z conjugations with probabilities `p`.
    Pauli { p: [f64; 4] },
    /// Explicit Kraus operators (must satisfy completeness).
    Kraus { name: String, ops: Vec<MatrixJson> },
}

/// Ground-truth rule used by the error-region metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    /// Qubit hemisphere rule: `<0|rho|0> > 1/2` is the positive class.
    Hemisphere,
    /// Sign of `Tr(observable * rho)`; ties are undefined.
    ObservableSign {
        observable: MatrixJson,
        #[serde(default = "default_tie_tolerance")]
        tie_tolerance: f64,
    },
}

fn default_tie_tolerance() -> f64 {
    1e-12
}

/// Loss family for the loss rows of the report.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossConfig {
    #[default]
    ZeroOne,
    Linear,
}

/// Top-level configuration for `rtlab metrics`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ensemble: EnsembleConfig,
    pub classifier: ClassifierConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub loss: LossConfig,
    /// Demand the error-region rows; fails validation when `oracle` or
    /// `perturbation` is missing.
    #[serde(default)]
    pub error_region: bool,
}

/// POVM-only configuration for `rtlab scan`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmConfig {
    pub effects: Vec<MatrixJson>,
}

/// Everything `cmd_metrics` needs, in core types.
pub struct MetricsTask {
    pub ensemble: LabeledEnsemble,
    pub classifier: Classifier,
    pub perturbation: Option<Perturbation>,
    pub oracle: Option<Box<dyn GroundTruth>>,
    pub loss: LossKind,
    pub error_region: bool,
}

/// Read and parse a JSON document of type `T`, keeping serde's line-anchored
/// message on parse failure.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(&format!("config `{}`", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(&format!("config `{}`", path.display()), e))
}

/// Convert a nested `[re, im]` table into a square matrix.
pub fn matrix_from_json(path: &str, rows: &MatrixJson) -> CliResult<ComplexMatrix> {
    let dim = rows.len();
    if dim == 0 {
        return Err(CliError::config(path, "matrix has no rows"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(CliError::config(
                path,
                format!("row {i} has {} entries, expected {dim}", row.len()),
            ));
        }
    }
    let rows: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|row| row.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
        .collect();
    ComplexMatrix::from_rows(&rows).map_err(|e| CliError::config(path, e))
}

/// A Hermitian observable from JSON; rejects non-Hermitian input outright
/// rather than letting the sign convention silently drift.
fn observable_from_json(path: &str, rows: &MatrixJson) -> CliResult<ComplexMatrix> {
    let m = matrix_from_json(path, rows)?;
    let defect = m
        .max_abs_diff(&m.adjoint())
        .map_err(|e| CliError::config(path, e))?;
    if defect > 1e-12 {
        return Err(CliError::config(
            path,
            format!("observable is not Hermitian (max |a_ij - conj(a_ji)| = {defect:.3e})"),
        ));
    }
    Ok(m)
}

fn state_from_config(path: &str, state: &StateConfig) -> CliResult<DensityMatrix> {
    match state {
        StateConfig::Matrix(rows) => {
            let m = matrix_from_json(path, rows)?;
            DensityMatrix::new(m).map_err(|e| CliError::config(path, e))
        }
        StateConfig::Bloch { theta, phi } => {
            DensityMatrix::bloch(*theta, *phi).map_err(|e| CliError::config(path, e))
        }
    }
}

fn label_from_config(path: &str, raw: i64, classes: u32) -> CliResult<Label> {
    if raw == -1 && classes == 2 {
        return Ok(Label::MINUS);
    }
    if raw >= 1 && raw <= i64::from(classes) {
        return Ok(Label(raw as u32));
    }
    Err(CliError::config(
        path,
        format!("label {raw} outside 1..={classes} (-1 is allowed only for 2 classes)"),
    ))
}

fn ensemble_from_config(cfg: &EnsembleConfig) -> CliResult<LabeledEnsemble> {
    let mut items = Vec::with_capacity(cfg.items.len());
    for (i, item) in cfg.items.iter().enumerate() {
        let path = format!("ensemble.items[{i}]");
        let state = state_from_config(&format!("{path}.state"), &item.state)?;
        let label = label_from_config(&format!("{path}.label"), item.label, cfg.classes)?;
        items.push(WeightedState { weight: item.weight, state, label });
    }
    LabeledEnsemble::new(items, cfg.classes).map_err(|e| CliError::config("ensemble", e))
}

fn classifier_from_config(cfg: &ClassifierConfig, dim: usize) -> CliResult<Classifier> {
    match cfg {
        ClassifierConfig::Povm { effects } => {
            let mats = effects
                .iter()
                .enumerate()
                .map(|(i, e)| matrix_from_json(&format!("classifier.povm.effects[{i}]"), e))
                .collect::<CliResult<Vec<_>>>()?;
            if mats.iter().any(|m| m.dim() != dim) {
                return Err(CliError::config(
                    "classifier.povm",
                    format!("effect dimension does not match the ensemble dimension {dim}"),
                ));
            }
            let povm = StochasticClassifier::new(mats)
                .map_err(|e| CliError::config("classifier.povm", e))?;
            Ok(Classifier::Stochastic(povm))
        }
        ClassifierConfig::SignObservable { observable, threshold } => {
            let obs = observable_from_json("classifier.sign_observable.observable", observable)?;
            if obs.dim() != dim {
                return Err(CliError::config(
                    "classifier.sign_observable",
                    format!("observable dimension does not match the ensemble dimension {dim}"),
                ));
            }
            if !threshold.is_finite() {
                return Err(CliError::config(
                    "classifier.sign_observable.threshold",
                    "threshold must be finite",
                ));
            }
            Ok(Classifier::Score(ScoreClassifier::sign_threshold(
                ScoreFn::LinearObservable(obs),
                *threshold,
            )))
        }
        ClassifierConfig::FidelityCentroids { centroids } => {
            let scores = centroids
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let path = format!("classifier.fidelity_centroids.centroids[{i}]");
                    let state = state_from_config(&path, c)?;
                    if state.dim() != dim {
                        return Err(CliError::config(
                            &path,
                            format!("centroid dimension does not match the ensemble dimension {dim}"),
                        ));
                    }
                    Ok(ScoreFn::FidelityToCentroid(state))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let h = ScoreClassifier::argmax(scores)
                .map_err(|e| CliError::config("classifier.fidelity_centroids", e))?;
            Ok(Classifier::Score(h))
        }
    }
}

fn perturbation_from_config(cfg: &PerturbationConfig, dim: usize) -> CliResult<Perturbation> {
    let channel = match cfg {
        PerturbationConfig::Identity => {
            let identity =
                ComplexMatrix::identity(dim).map_err(|e| CliError::config("perturbation", e))?;
            KrausChannel::new("identity", vec![identity])
                .map_err(|e| CliError::config("perturbation.identity", e))?
        }
        PerturbationConfig::Kraus { name, ops } => {
            let mats = ops
                .iter()
                .enumerate()
                .map(|(i, m)| matrix_from_json(&format!("perturbation.kraus.ops[{i}]"), m))
                .collect::<CliResult<Vec<_>>>()?;
            if mats.iter().any(|m| m.dim() != dim) {
                return Err(CliError::config(
                    "perturbation.kraus",
                    format!("operator dimension does not match the ensemble dimension {dim}"),
                ));
            }
            KrausChannel::new(name.as_str(), mats)
                .map_err(|e| CliError::config("perturbation.kraus", e))?
        }
        named => {
            if dim != 2 {
                return Err(CliError::config(
                    "perturbation",
                    format!("named channel families are qubit-only; the ensemble has dimension {dim}"),
                ));
            }
            let family = match named {
                PerturbationConfig::BitFlip { p } => NamedChannel::BitFlip { p: *p },
                PerturbationConfig::PhaseFlip { p } => NamedChannel::PhaseFlip { p: *p },
                PerturbationConfig::Depolarizing { p } => NamedChannel::Depolarizing { p: *p },
                PerturbationConfig::Pauli { p } => NamedChannel::Pauli { p: *p },
                PerturbationConfig::Identity | PerturbationConfig::Kraus { .. } => unreachable!(),
            };
            family.build().map_err(|e| CliError::config("perturbation", e))?
        }
    };
    Ok(Perturbation::Channel(channel))
}

fn oracle_from_config(cfg: &OracleConfig, dim: usize) -> CliResult<Box<dyn GroundTruth>> {
    match cfg {
        OracleConfig::Hemisphere => Ok(Box::new(HemisphereOracle)),
        OracleConfig::ObservableSign { observable, tie_tolerance } => {
            let obs = observable_from_json("oracle.observable_sign.observable", observable)?;
            if obs.dim() != dim {
                return Err(CliError::config(
                    "oracle.observable_sign",
                    format!("observable dimension does not match the ensemble dimension {dim}"),
                ));
            }
            let oracle = ObservableSignOracle::new(obs, *tie_tolerance)
                .map_err(|e| CliError::config("oracle.observable_sign", e))?;
            Ok(Box::new(oracle))
        }
    }
}

impl RunConfig {
    /// Validate the whole document and build the core objects.
    pub fn into_task(self) -> CliResult<MetricsTask> {
        let ensemble = ensemble_from_config(&self.ensemble)?;
        let dim = ensemble.dim();

        let loss = match self.loss {
            LossConfig::ZeroOne => LossKind::ZeroOne,
            LossConfig::Linear => {
                if !matches!(self.classifier, ClassifierConfig::SignObservable { .. }) {
                    return Err(CliError::Config(
                        "loss: `linear` needs a `sign_observable` classifier".into(),
                    ));
                }
                LossKind::Linear
            }
        };

        let classifier = classifier_from_config(&self.classifier, dim)?;
        if classifier.num_classes() != ensemble.num_classes() {
            return Err(CliError::Config(format!(
                "classifier: answers {} classes but the ensemble declares {}",
                classifier.num_classes(),
                ensemble.num_classes()
            )));
        }

        let perturbation = match &self.perturbation {
            Some(p) => Some(perturbation_from_config(p, dim)?),
            None => None,
        };
        let oracle = match &self.oracle {
            Some(o) => Some(oracle_from_config(o, dim)?),
            None => None,
        };

        if self.error_region && perturbation.is_none() {
            return Err(CliError::Config(
                "error_region: requested but the `perturbation` field is missing".into(),
            ));
        }
        if self.error_region && oracle.is_none() {
            return Err(CliError::Config(
                "error_region: requested but the `oracle` field is missing".into(),
            ));
        }

        Ok(MetricsTask {
            ensemble,
            classifier,
            perturbation,
            oracle,
            loss,
            error_region: self.error_region,
        })
    }
}

impl PovmConfig {
    /// Build the stochastic classifier for `rtlab scan`.
    pub fn into_classifier(self) -> CliResult<StochasticClassifier> {
        let mats = self
            .effects
            .iter()
            .enumerate()
            .map(|(i, e)| matrix_from_json(&format!("effects[{i}]"), e))
            .collect::<CliResult<Vec<_>>>()?;
        StochasticClassifier::new(mats).map_err(|e| CliError::config("effects", e))
    }
}

/// Shared default measurement: the computational-basis qubit projectors.
pub fn z_basis_povm() -> StochasticClassifier {
    let identity = ComplexMatrix::identity(2).expect("qubit identity");
    let plus = identity.add(&pauli_z()).expect("shape").scale(0.5);
    let minus = identity.sub(&pauli_z()).expect("shape").scale(0.5);
    StochasticClassifier::new(vec![plus, minus]).expect("projector POVM is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_json(entries: &[f64]) -> MatrixJson {
        entries
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                (0..entries.len()).map(|j| if i == j { [v, 0.0] } else { [0.0, 0.0] }).collect()
            })
            .collect()
    }

    #[test]
    fn labels_accept_minus_one_only_for_binary() {
        assert_eq!(label_from_config("p", -1, 2).unwrap(), Label::MINUS);
        assert_eq!(label_from_config("p", 2, 3).unwrap(), Label(2));
        assert!(label_from_config("p", -1, 3).is_err());
        assert!(label_from_config("p", 0, 2).is_err());
        assert!(label_from_config("p", 4, 3).is_err());
    }

    #[test]
    fn non_hermitian_observable_is_rejected() {
        let mut rows = diag_json(&[1.0, -1.0]);
        rows[0][1] = [0.0, 0.5];
        rows[1][0] = [0.0, 0.5]; // conj would need -0.5
        let err = observable_from_json("obs", &rows).unwrap_err();
        assert!(err.to_string().contains("Hermitian"), "{err}");
    }

    #[test]
    fn linear_loss_demands_a_threshold_classifier() {
        let cfg = RunConfig {
            ensemble: EnsembleConfig {
                classes: 2,
                items: vec![
                    ItemConfig {
                        weight: 0.5,
                        label: 1,
                        state: StateConfig::Matrix(diag_json(&[1.0, 0.0])),
                    },
                    ItemConfig {
                        weight: 0.5,
                        label: -1,
                        state: StateConfig::Matrix(diag_json(&[0.0, 1.0])),
                    },
                ],
            },
            classifier: ClassifierConfig::Povm {
                effects: vec![diag_json(&[1.0, 0.0]), diag_json(&[0.0, 1.0])],
            },
            perturbation: None,
            oracle: None,
            loss: LossConfig::Linear,
            error_region: false,
        };
        let err = cfg.into_task().err().unwrap();
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
        assert!(err.to_string().contains("sign_observable"), "{err}");
    }

    #[test]
    fn error_region_requires_oracle_and_perturbation() {
        let base = RunConfig {
            ensemble: EnsembleConfig {
                classes: 2,
                items: vec![
                    ItemConfig {
                        weight: 0.5,
                        label: 1,
                        state: StateConfig::Bloch { theta: 0.4, phi: 0.0 },
                    },
                    ItemConfig {
                        weight: 0.5,
                        label: 2,
                        state: StateConfig::Bloch { theta: 2.8, phi: 1.0 },
                    },
                ],
            },
            classifier: ClassifierConfig::Povm {
                effects: vec![diag_json(&[1.0, 0.0]), diag_json(&[0.0, 1.0])],
            },
            perturbation: Some(PerturbationConfig::Depolarizing { p: 0.25 }),
            oracle: None,
            loss: LossConfig::ZeroOne,
            error_region: true,
        };
        let err = base.clone().into_task().err().unwrap();
        assert!(err.to_string().contains("oracle"), "{err}");

        let mut no_noise = base;
        no_noise.perturbation = None;
        let err = no_noise.into_task().err().unwrap();
        assert!(err.to_string().contains("perturbation"), "{err}");
    }
}
