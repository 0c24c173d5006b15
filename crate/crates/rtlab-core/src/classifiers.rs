//! Deterministic score classifiers, stochastic (measurement-based)
//! classifiers, and two closed-form classical feature models used as
//! reference points for robustness/accuracy trade-offs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
// Needed in pure no_std builds; test builds pull std into the crate graph
// (via dev-dependencies), and std's inherent f64 methods then shadow these.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{fidelity, hermitian_eigendecomposition, trace_distance, ComplexMatrix};
use crate::states::{DensityMatrix, FeatureOperator, Label};

/// Two scores closer than this are a tie and refuse to classify.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

/// Tolerance on POVM validity: effect spectra within `[-tol, 1+tol]` and
/// completeness `sum Pi_j = I` within `tol`.
pub const POVM_TOLERANCE: f64 = 1e-10;

/// One weighted term of an additive score.
#[derive(Debug, Clone)]
pub struct WeightedFeature {
    pub weight: f64,
    pub feature: FeatureOperator,
}

/// Real-valued score assigned to a state.
#[derive(Debug, Clone)]
pub enum ScoreFn {
    /// `Tr(obs * rho)` for a Hermitian observable.
    LinearObservable(ComplexMatrix),
    /// Fidelity to a fixed reference state.
    FidelityToCentroid(DensityMatrix),
    /// `1 - tau(rho, centroid)`: large when close in trace distance.
    TraceDistanceToCentroid(DensityMatrix),
    /// `sum_l w_l f_l(rho)` over named features.
    WeightedFeatureSum(Vec<WeightedFeature>),
}

impl ScoreFn {
    pub fn eval(&self, state: &DensityMatrix) -> Result<f64> {
        match self {
            ScoreFn::LinearObservable(obs) => state.expectation(obs),
            ScoreFn::FidelityToCentroid(c) => fidelity(state, c),
            ScoreFn::TraceDistanceToCentroid(c) => Ok(1.0 - trace_distance(state, c)?),
            ScoreFn::WeightedFeatureSum(terms) => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.weight * t.feature.eval(state)?;
                }
                Ok(acc)
            }
        }
    }
}

/// How scores become a label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Largest of `K` scores wins; label is the 1-based score index.
    Argmax,
    /// Binary: score above the threshold is the positive class, below the
    /// negative class.
    SignThreshold { threshold: f64 },
}

/// Deterministic classifier: scores plus a decision rule.
#[derive(Debug, Clone)]
pub struct ScoreClassifier {
    scores: Vec<ScoreFn>,
    decision: Decision,
}

impl ScoreClassifier {
    /// Multi-class classifier choosing the largest of `scores`.
    pub fn argmax(scores: Vec<ScoreFn>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "argmax needs at least 2 scores, got {}",
                scores.len()
            )));
        }
        Ok(Self { scores, decision: Decision::Argmax })
    }

    /// Binary classifier thresholding one score.
    pub fn sign_threshold(score: ScoreFn, threshold: f64) -> Self {
        Self { scores: vec![score], decision: Decision::SignThreshold { threshold } }
    }

    pub fn decision(&self) -> Decision {
        self.decision
    }

    pub fn score_fns(&self) -> &[ScoreFn] {
        &self.scores
    }

    pub fn num_classes(&self) -> u32 {
        match self.decision {
            Decision::Argmax => self.scores.len() as u32,
            Decision::SignThreshold { .. } => 2,
        }
    }

    pub fn score_values(&self, state: &DensityMatrix) -> Result<Vec<f64>> {
        self.scores.iter().map(|s| s.eval(state)).collect()
    }

    /// Signed margin for binary threshold classifiers: `score - threshold`.
    pub fn margin(&self, state: &DensityMatrix) -> Result<f64> {
        match self.decision {
            Decision::SignThreshold { threshold } => Ok(self.scores[0].eval(state)? - threshold),
            Decision::Argmax => Err(Error::InvalidParameter(
                "margin is defined for threshold classifiers only".into(),
            )),
        }
    }

    /// Classify; near-ties within [`SCORE_TIE_TOLERANCE`] are an error rather
    /// than an arbitrary choice.
    pub fn predict(&self, state: &DensityMatrix) -> Result<Label> {
        match self.decision {
            Decision::SignThreshold { threshold } => {
                let v = self.scores[0].eval(state)?;
                let margin = v - threshold;
                if margin.abs() <= SCORE_TIE_TOLERANCE {
                    return Err(Error::ScoreTie(v));
                }
                Ok(if margin > 0.0 { Label::PLUS } else { Label::MINUS })
            }
            Decision::Argmax => {
                let values = self.score_values(state)?;
                let mut best = 0;
                for (j, v) in values.iter().enumerate() {
                    if *v > values[best] {
                        best = j;
                    }
                }
                for (j, v) in values.iter().enumerate() {
                    if j != best && (values[best] - v).abs() <= SCORE_TIE_TOLERANCE {
                        return Err(Error::ScoreTie(*v));
                    }
                }
                Ok(Label((best + 1) as u32))
            }
        }
    }
}

/// Stochastic classifier: a POVM whose effect `Pi_j` gives the probability
/// `Tr(Pi_j rho)` of outputting label `j`.
#[derive(Debug, Clone)]
pub struct StochasticClassifier {
    effects: Vec<ComplexMatrix>,
}

impl StochasticClassifier {
    /// Validate the effects as a POVM: Hermitian, spectra in `[0, 1]` and
    /// completeness within [`POVM_TOLERANCE`].
    pub fn new(effects: Vec<ComplexMatrix>) -> Result<Self> {
        if effects.len() < 2 {
            return Err(Error::InvalidPovm(format!(
                "need at least 2 effects, got {}",
                effects.len()
            )));
        }
        let dim = effects[0].dim();
        let mut sum = ComplexMatrix::zeros(dim)?;
        for (j, effect) in effects.iter().enumerate() {
            if effect.dim() != dim {
                return Err(Error::DimensionMismatch(effect.dim(), dim));
            }
            effect
                .require_hermitian()
                .map_err(|_| Error::InvalidPovm(format!("effect {j} is not Hermitian")))?;
            let eig = hermitian_eigendecomposition(effect)?;
            let min = eig.values.first().copied().unwrap_or(0.0);
            let max = eig.values.last().copied().unwrap_or(0.0);
            if min < -POVM_TOLERANCE || max > 1.0 + POVM_TOLERANCE {
                return Err(Error::InvalidPovm(format!(
                    "effect {j} has spectrum [{min}, {max}] outside [0, 1]"
                )));
            }
            sum = sum.add(effect)?;
        }
        let defect = sum.max_abs_diff(&ComplexMatrix::identity(dim)?)?;
        if defect > POVM_TOLERANCE {
            return Err(Error::InvalidPovm(format!(
                "effects sum differs from identity by {defect}"
            )));
        }
        Ok(Self { effects })
    }

    /// Binary classifier from one effect: `{Pi, I - Pi}`.
    pub fn binary(effect: ComplexMatrix) -> Result<Self> {
        let complement = ComplexMatrix::identity(effect.dim())?.sub(&effect)?;
        Self::new(vec![effect, complement])
    }

    pub fn num_classes(&self) -> u32 {
        self.effects.len() as u32
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    /// Effect for one 1-based label.
    pub fn effect(&self, label: Label) -> Result<&ComplexMatrix> {
        self.effects
            .get(label.0.checked_sub(1).ok_or(Error::InvalidPovm("label 0".into()))? as usize)
            .ok_or_else(|| {
                Error::InvalidPovm(format!(
                    "label {} outside 1..={}",
                    label.0,
                    self.effects.len()
                ))
            })
    }

    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    /// Outcome distribution `[Tr(Pi_j rho)]_j`, clamped to `[0, 1]`.
    pub fn predict_distribution(&self, state: &DensityMatrix) -> Result<Vec<f64>> {
        self.effects
            .iter()
            .map(|e| Ok(e.trace_product_re(state.matrix())?.clamp(0.0, 1.0)))
            .collect()
    }
}

/// A classifier of either kind.
#[derive(Debug, Clone)]
pub enum Classifier {
    Score(ScoreClassifier),
    Stochastic(StochasticClassifier),
}

impl Classifier {
    pub fn num_classes(&self) -> u32 {
        match self {
            Classifier::Score(c) => c.num_classes(),
            Classifier::Stochastic(c) => c.num_classes(),
        }
    }

    /// Probability of predicting `label` on `state` (0/1 for deterministic
    /// classifiers).
    pub fn predict_probability(&self, state: &DensityMatrix, label: Label) -> Result<f64> {
        match self {
            Classifier::Score(c) => Ok(if c.predict(state)? == label { 1.0 } else { 0.0 }),
            Classifier::Stochastic(c) => {
                Ok(c.effect(label)?.trace_product_re(state.matrix())?.clamp(0.0, 1.0))
            }
        }
    }
}

/// Standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

/// Which of the two reference feature models to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianModelKind {
    /// Sign of the mean of `d` Gaussian features centred on `+-eta` per
    /// class; the noise negates every feature, mirroring the two classes.
    MeanFeature,
    /// Sign of a single noise-invariant feature that matches the true class
    /// with probability `p`.
    FirstFeature,
}

/// Binary classification task with `d` Gaussian "weak" features at
/// separation `eta` and one noise-invariant "strong" feature of reliability
/// `p`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFeatureModel {
    pub d: usize,
    pub eta: f64,
    pub p: f64,
    pub kind: GaussianModelKind,
}

/// Accuracy triple for one Gaussian feature model.
#[derive(Debug, Clone)]
pub struct GaussianModelReport {
    /// Clean accuracy; Monte Carlo for the mean-feature model.
    pub accuracy: f64,
    /// Binomial standard error when sampled, `None` when exact.
    pub accuracy_standard_error: Option<f64>,
    /// Probability the prediction survives the noise.
    pub prediction_change_robustness: f64,
    /// Accuracy on noise-corrupted inputs.
    pub robustness_accuracy: f64,
    /// Closed-form accuracy for cross-checking the sampled estimate.
    pub analytic_accuracy: f64,
    /// Number of Monte Carlo samples used (0 when exact).
    pub samples: usize,
}

/// Evaluate a Gaussian feature model.
///
/// The mean-feature model is sampled (`n` draws, seeded); its noise negates
/// all features, so per-sample the corrupted prediction is exactly the
/// opposite of the clean one: robustness is exactly 0 and the corrupted
/// accuracy is exactly the complement of the clean accuracy. The
/// first-feature model needs no sampling: its feature is noise-invariant,
/// so robustness is exactly 1 and both accuracies equal `p`.
pub fn gaussian_model_metrics(
    model: &GaussianFeatureModel,
    n: usize,
    seed: u64,
) -> Result<GaussianModelReport> {
    if !(0.0..=1.0).contains(&model.p) {
        return Err(Error::InvalidParameter(format!(
            "feature reliability must lie in [0, 1], got {}",
            model.p
        )));
    }
    if model.d == 0 || model.eta <= 0.0 {
        return Err(Error::InvalidParameter(
            "need d >= 1 features at positive separation".into(),
        ));
    }
    match model.kind {
        GaussianModelKind::FirstFeature => Ok(GaussianModelReport {
            accuracy: model.p,
            accuracy_standard_error: None,
            prediction_change_robustness: 1.0,
            robustness_accuracy: model.p,
            analytic_accuracy: model.p,
            samples: 0,
        }),
        GaussianModelKind::MeanFeature => {
            if n == 0 {
                return Err(Error::InvalidParameter("need at least one sample".into()));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut correct = 0usize;
            for _ in 0..n {
                let class: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut sum = 0.0;
                for _ in 0..model.d {
                    let noise: f64 = rng.sample(StandardNormal);
                    sum += model.eta * class + noise;
                }
                let mean = sum / model.d as f64;
                if mean == 0.0 {
                    return Err(Error::ScoreTie(mean));
                }
                if (mean > 0.0) == (class > 0.0) {
                    correct += 1;
                }
            }
            let accuracy = correct as f64 / n as f64;
            let se = (accuracy * (1.0 - accuracy) / n as f64).sqrt();
            Ok(GaussianModelReport {
                accuracy,
                accuracy_standard_error: Some(se),
                prediction_change_robustness: 0.0,
                robustness_accuracy: 1.0 - accuracy,
                analytic_accuracy: standard_normal_cdf(model.eta * (model.d as f64).sqrt()),
                samples: n,
            })
        }
    }
}

/// Conditional prediction rates of a model whose inputs carry one
/// noise-invariant feature: `rate(g_sign, class_sign)` is the probability of
/// predicting the positive class given the invariant feature's sign and the
/// true class.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalRates {
    /// `P(predict + | invariant says +, class +)`.
    pub given_plus_in_plus: f64,
    /// `P(predict + | invariant says -, class +)`.
    pub given_minus_in_plus: f64,
    /// `P(predict + | invariant says +, class -)`.
    pub given_plus_in_minus: f64,
    /// `P(predict + | invariant says -, class -)`.
    pub given_minus_in_minus: f64,
}

/// Accuracy comparison of a rich model against the bare invariant-feature
/// model under class-mirroring noise that leaves the invariant feature
/// untouched.
#[derive(Debug, Clone)]
pub struct InvariantFeatureComparison {
    /// Clean accuracy of the rich model.
    pub rich_accuracy: f64,
    /// Corrupted-input accuracy of the rich model.
    pub rich_robustness_accuracy: f64,
    /// Clean accuracy of the invariant-feature model (its corrupted accuracy
    /// is identical because its feature never moves).
    pub invariant_accuracy: f64,
}

impl InvariantFeatureComparison {
    /// Whenever the rich model beats a reliable (`> 1/2`) invariant model on
    /// clean accuracy, it must lose on corrupted accuracy.
    pub fn tradeoff_implication_holds(&self) -> bool {
        let premise =
            self.rich_accuracy > self.invariant_accuracy && self.invariant_accuracy > 0.5;
        !premise || self.rich_robustness_accuracy < self.invariant_accuracy
    }
}

/// Closed-form accuracies for the invariant-feature comparison with balanced
/// classes: the invariant feature matches the true class with probability
/// `p`, and the rich model's conditional positive rates are `rates`. The
/// noise mirrors the two class-conditional distributions while fixing the
/// invariant feature.
pub fn invariant_feature_comparison(
    p: f64,
    rates: &ConditionalRates,
) -> Result<InvariantFeatureComparison> {
    for &v in &[
        p,
        rates.given_plus_in_plus,
        rates.given_minus_in_plus,
        rates.given_plus_in_minus,
        rates.given_minus_in_minus,
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!(
                "probabilities must lie in [0, 1], got {v}"
            )));
        }
    }
    // In class +, the invariant feature says + with probability p; in class
    // -, with probability 1-p.
    let predict_plus_in_plus =
        p * rates.given_plus_in_plus + (1.0 - p) * rates.given_minus_in_plus;
    let predict_plus_in_minus =
        (1.0 - p) * rates.given_plus_in_minus + p * rates.given_minus_in_minus;
    let rich_accuracy = 0.5 * predict_plus_in_plus + 0.5 * (1.0 - predict_plus_in_minus);
    // Mirrored inputs: class + items now look like class - items (and vice
    // versa) at an unchanged invariant feature.
    let corrupted_plus_in_plus =
        p * rates.given_plus_in_minus + (1.0 - p) * rates.given_minus_in_minus;
    let corrupted_plus_in_minus =
        (1.0 - p) * rates.given_plus_in_plus + p * rates.given_minus_in_plus;
    let rich_robustness_accuracy =
        0.5 * corrupted_plus_in_plus + 0.5 * (1.0 - corrupted_plus_in_minus);
    Ok(InvariantFeatureComparison {
        rich_accuracy,
        rich_robustness_accuracy,
        invariant_accuracy: p,
    })
}
