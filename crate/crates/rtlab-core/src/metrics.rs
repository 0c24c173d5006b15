//! The metric zoo: accuracy, the three robustness-accuracy variants, losses
//! and robust losses, adversarial radii, feature usefulness/robustness, and
//! the per-feature decomposition of a robustness gap.
//!
//! Every expectation here is an exact weighted sum over a finite ensemble;
//! Monte Carlo appears only in the classical Gaussian reference models and
//! numeric search only in adversarial radii.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::channels::Perturbation;
use crate::classifiers::{Classifier, Decision, ScoreClassifier, ScoreFn};
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eigendecomposition, trace_distance};
use crate::states::{
    random_density_matrix, random_pure_state, DensityMatrix, FeatureOperator, GroundTruth, Label,
    LabeledEnsemble,
};

/// Slack allowed outside `[0, 1]` for probability-valued metrics.
pub const PROBABILITY_SLACK: f64 = 1e-10;

/// Tolerance used when deciding whether a feature's value was fixed or
/// sign-flipped by a perturbation.
pub const FLIP_STRUCTURE_TOLERANCE: f64 = 1e-9;

/// Which robustness semantics a metric uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustnessKind {
    /// Judge corrupted inputs against the original labels.
    CorruptedInstance,
    /// Judge corrupted inputs against the clean predictions.
    PredictionChange,
    /// Judge corrupted inputs against the re-evaluated ground truth.
    ErrorRegion,
}

/// Loss family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Misclassification indicator.
    ZeroOne,
    /// `-c * H(sigma)` for binary threshold score models.
    Linear,
}

/// Identity of a metric; `key` gives the stable report name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    Accuracy,
    RobustnessAccuracy,
    PredictionChangeRobustness,
    ErrorRegionRobustnessAccuracy,
    Loss,
    RobustLossCorruptedInstance,
    RobustLossPredictionChange,
    RobustLossErrorRegion,
    AdversarialRadiusCorruptedInstance,
    AdversarialRadiusPredictionChange,
    AdversarialRadiusErrorRegion,
}

impl MetricKind {
    pub fn key(&self) -> &'static str {
        match self {
            MetricKind::Accuracy => "A",
            MetricKind::RobustnessAccuracy => "A_tilde",
            MetricKind::PredictionChangeRobustness => "A_star",
            MetricKind::ErrorRegionRobustnessAccuracy => "A_bar",
            MetricKind::Loss => "L",
            MetricKind::RobustLossCorruptedInstance => "L_tilde_CI",
            MetricKind::RobustLossPredictionChange => "L_star_PC",
            MetricKind::RobustLossErrorRegion => "L_bar_ER",
            MetricKind::AdversarialRadiusCorruptedInstance => "Delta_tilde",
            MetricKind::AdversarialRadiusPredictionChange => "Delta_star",
            MetricKind::AdversarialRadiusErrorRegion => "Delta_bar",
        }
    }

    /// Metrics that are probabilities and must live in `[0, 1]`.
    pub fn is_probability(&self) -> bool {
        matches!(
            self,
            MetricKind::Accuracy
                | MetricKind::RobustnessAccuracy
                | MetricKind::PredictionChangeRobustness
                | MetricKind::ErrorRegionRobustnessAccuracy
        )
    }
}

/// How a metric value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ExactSum,
    MonteCarlo { samples: usize },
    NumericSearch { restarts: usize },
}

/// A computed metric with provenance.
#[derive(Debug, Clone)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
    pub standard_error: Option<f64>,
    pub method: Method,
}

impl MetricValue {
    pub fn exact(kind: MetricKind, value: f64) -> Result<Self> {
        Self::with_method(kind, value, Method::ExactSum, None)
    }

    pub fn with_method(
        kind: MetricKind,
        value: f64,
        method: Method,
        standard_error: Option<f64>,
    ) -> Result<Self> {
        if kind.is_probability()
            && !((-PROBABILITY_SLACK)..=(1.0 + PROBABILITY_SLACK)).contains(&value)
        {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} = {value} outside [0, 1]",
                kind.key()
            )));
        }
        Ok(Self { kind, value, standard_error, method })
    }
}

/// Probability that the classifier outputs `label` on `state` (indicator for
/// deterministic classifiers).
fn agreement_probability(h: &Classifier, state: &DensityMatrix, label: Label) -> Result<f64> {
    h.predict_probability(state, label)
}

/// Clean accuracy `A`: expected probability of agreeing with the true label.
pub fn accuracy(h: &Classifier, e: &LabeledEnsemble) -> Result<MetricValue> {
    let mut acc = 0.0;
    for item in e.items() {
        acc += item.weight * agreement_probability(h, &item.state, item.label)?;
    }
    MetricValue::exact(MetricKind::Accuracy, acc)
}

/// Corrupted-instance robustness accuracy `A~`: accuracy on perturbed states
/// judged against the original labels.
pub fn robustness_accuracy(
    h: &Classifier,
    e: &LabeledEnsemble,
    p: &Perturbation,
) -> Result<MetricValue> {
    let corrupted = p.apply_to_ensemble(e)?;
    let mut acc = 0.0;
    for item in corrupted.items() {
        acc += item.weight * agreement_probability(h, &item.state, item.label)?;
    }
    MetricValue::exact(MetricKind::RobustnessAccuracy, acc)
}

/// Prediction-change robustness `A*`: probability the prediction survives
/// the perturbation. Stochastic classifiers use the independent
/// joint-agreement convention `sum_j Tr(Pi_j rho) Tr(Pi_j rho~)`.
pub fn prediction_change_robustness(
    h: &Classifier,
    e: &LabeledEnsemble,
    p: &Perturbation,
) -> Result<MetricValue> {
    let corrupted = p.apply_to_ensemble(e)?;
    let mut acc = 0.0;
    for (item, image) in e.items().iter().zip(corrupted.items()) {
        let agree = match h {
            Classifier::Score(sc) => {
                if sc.predict(&item.state)? == sc.predict(&image.state)? {
                    1.0
                } else {
                    0.0
                }
            }
            Classifier::Stochastic(st) => {
                let before = st.predict_distribution(&item.state)?;
                let after = st.predict_distribution(&image.state)?;
                before.iter().zip(after.iter()).map(|(a, b)| a * b).sum()
            }
        };
        acc += item.weight * agree;
    }
    MetricValue::exact(MetricKind::PredictionChangeRobustness, acc)
}

/// Error-region robustness accuracy `A-`: accuracy on perturbed states
/// judged against the *re-labeled* ground truth of the perturbed state.
pub fn error_region_robustness_accuracy(
    h: &Classifier,
    e: &LabeledEnsemble,
    p: &Perturbation,
    oracle: &dyn GroundTruth,
) -> Result<MetricValue> {
    let corrupted = p.apply_to_ensemble(e)?;
    let mut acc = 0.0;
    for (i, item) in corrupted.items().iter().enumerate() {
        let truth = oracle.true_class(&item.state).map_err(|err| {
            Error::OracleUndefined(alloc::format!("item {i}: {err}"))
        })?;
        acc += item.weight * agreement_probability(h, &item.state, truth)?;
    }
    MetricValue::exact(MetricKind::ErrorRegionRobustnessAccuracy, acc)
}

/// Signed score of a binary threshold classifier, mapped through the class
/// sign convention (`+1` for the positive class).
fn linear_loss_term(h: &ScoreClassifier, state: &DensityMatrix, class_sign: f64) -> Result<f64> {
    match h.decision() {
        Decision::SignThreshold { .. } => Ok(-class_sign * h.score_values(state)?[0]),
        Decision::Argmax => Err(Error::InvalidParameter(
            "linear loss needs a binary threshold classifier".into(),
        )),
    }
}

/// Clean empirical loss `L`.
pub fn empirical_loss(h: &Classifier, e: &LabeledEnsemble, loss: LossKind) -> Result<MetricValue> {
    let value = expected_loss_against(h, e, loss, |item, _| Ok(item.label))?;
    MetricValue::with_method(MetricKind::Loss, value, Method::ExactSum, None)
}

/// Robust loss of the requested kind: `L~` (original labels), `L*` (clean
/// predictions), or `L-` (re-labeled truth, needs the oracle).
pub fn robust_loss(
    h: &Classifier,
    e: &LabeledEnsemble,
    p: &Perturbation,
    kind: RobustnessKind,
    loss: LossKind,
    oracle: Option<&dyn GroundTruth>,
) -> Result<MetricValue> {
    let corrupted = p.apply_to_ensemble(e)?;
    let metric_kind = match kind {
        RobustnessKind::CorruptedInstance => MetricKind::RobustLossCorruptedInstance,
        RobustnessKind::PredictionChange => MetricKind::RobustLossPredictionChange,
        RobustnessKind::ErrorRegion => MetricKind::RobustLossErrorRegion,
    };
    let value = match kind {
        RobustnessKind::CorruptedInstance => {
            expected_loss_against(h, &corrupted, loss, |item, _| Ok(item.label))?
        }
        RobustnessKind::PredictionChange => {
            // Reference labels are the clean predictions.
            let clean: Result<Vec<Label>> = match h {
                Classifier::Score(sc) => e.items().iter().map(|it| sc.predict(&it.state)).collect(),
                Classifier::Stochastic(_) => {
                    return Err(Error::InvalidParameter(
                        "prediction-change loss needs a deterministic classifier".into(),
                    ))
                }
            };
            let clean = clean?;
            expected_loss_against(h, &corrupted, loss, |_, i| Ok(clean[i]))?
        }
        RobustnessKind::ErrorRegion => {
            let oracle = oracle.ok_or_else(|| {
                Error::InvalidParameter("error-region loss needs a ground-truth oracle".into())
            })?;
            let labels: Result<Vec<Label>> = corrupted
                .items()
                .iter()
                .enumerate()
                .map(|(i, it)| {
                    oracle.true_class(&it.state).map_err(|err| {
                        Error::OracleUndefined(alloc::format!("item {i}: {err}"))
                    })
                })
                .collect();
            let labels = labels?;
            expected_loss_against(h, &corrupted, loss, |_, i| Ok(labels[i]))?
        }
    };
    MetricValue::with_method(metric_kind, value, Method::ExactSum, None)
}

/// Weighted expected loss against per-item reference labels.
fn expected_loss_against(
    h: &Classifier,
    e: &LabeledEnsemble,
    loss: LossKind,
    mut reference: impl FnMut(&crate::states::WeightedState, usize) -> Result<Label>,
) -> Result<f64> {
    let mut acc = 0.0;
    for (i, item) in e.items().iter().enumerate() {
        let label = reference(item, i)?;
        let term = match loss {
            LossKind::ZeroOne => 1.0 - agreement_probability(h, &item.state, label)?,
            LossKind::Linear => match h {
                Classifier::Score(sc) => linear_loss_term(sc, &item.state, label.binary_sign()?)?,
                Classifier::Stochastic(_) => {
                    return Err(Error::InvalidParameter(
                        "linear loss needs a score classifier".into(),
                    ))
                }
            },
        };
        acc += item.weight * term;
    }
    Ok(acc)
}

/// Budget for the adversarial-radius search.
#[derive(Debug, Clone, Copy)]
pub struct SearchBudget {
    /// Random target states to try beyond the fixed candidates.
    pub restarts: usize,
    /// Bisection refinements per target.
    pub steps: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { restarts: 24, steps: 48, seed: 0 }
    }
}

/// Result of an adversarial-radius search: an upper bound on the minimal
/// trace distance at which the condition breaks, plus the witness found and
/// (where available) an analytic lower bound on the true minimum.
#[derive(Debug, Clone)]
pub struct AdversarialRadius {
    pub kind: RobustnessKind,
    /// Distance to the found witness; `f64::INFINITY` when no witness exists
    /// within the whole state space searched.
    pub radius: f64,
    pub witness: Option<DensityMatrix>,
    /// Margin-based lower bound for bounded linear score models
    /// (prediction-change and corrupted-instance kinds only).
    pub analytic_lower_bound: Option<f64>,
}

fn try_predict(h: &ScoreClassifier, state: &DensityMatrix) -> Result<Option<Label>> {
    match h.predict(state) {
        Ok(label) => Ok(Some(label)),
        Err(Error::ScoreTie(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Margin lower bound: for a score `Tr(M rho)` with spectrum inside `[0,1]`
/// and a threshold decision, flipping the sign needs a trace-distance move of
/// at least the margin, since `|Tr(M(rho - sigma))| <= tau(rho, sigma)`.
fn margin_lower_bound(h: &ScoreClassifier, sigma: &DensityMatrix) -> Option<f64> {
    match h.decision() {
        Decision::SignThreshold { .. } => {}
        Decision::Argmax => return None,
    }
    let obs = match h.score_fns().first()? {
        ScoreFn::LinearObservable(m) => m,
        _ => return None,
    };
    let eig = hermitian_eigendecomposition(obs).ok()?;
    let min = *eig.values.first()?;
    let max = *eig.values.last()?;
    if min < -PROBABILITY_SLACK || max > 1.0 + PROBABILITY_SLACK {
        return None;
    }
    let margin = h.margin(sigma).ok()?;
    Some(margin.abs().min(1.0))
}

/// Search for the closest state (in trace distance) at which the robustness
/// condition breaks.
///
/// The search walks mixture paths from `sigma` toward a set of target states
/// (computational basis states, the maximally mixed state, and seeded random
/// states), bisecting each path for the earliest break. The returned radius
/// is therefore an *upper bound* on the true minimal distance. Score ties
/// along the way never count as witnesses.
pub fn adversarial_radius(
    h: &ScoreClassifier,
    sigma: &DensityMatrix,
    kind: RobustnessKind,
    true_label: Option<Label>,
    oracle: Option<&dyn GroundTruth>,
    search: &SearchBudget,
) -> Result<AdversarialRadius> {
    if search.restarts == 0 && search.steps == 0 {
        return Err(Error::InvalidParameter("search budget is empty".into()));
    }
    let analytic_lower_bound = match kind {
        RobustnessKind::ErrorRegion => None,
        _ => margin_lower_bound(h, sigma),
    };
    let base_pred = try_predict(h, sigma)?;

    // Reference the condition is checked against.
    enum Target<'o> {
        Fixed(Label),
        Oracle(&'o dyn GroundTruth),
    }
    let target = match kind {
        RobustnessKind::PredictionChange => match base_pred {
            // On the decision boundary: radius zero by definition.
            None => {
                return Ok(AdversarialRadius {
                    kind,
                    radius: 0.0,
                    witness: Some(sigma.clone()),
                    analytic_lower_bound,
                })
            }
            Some(label) => Target::Fixed(label),
        },
        RobustnessKind::CorruptedInstance => {
            let truth = match (true_label, oracle) {
                (Some(l), _) => l,
                (None, Some(o)) => o.true_class(sigma)?,
                (None, None) => {
                    return Err(Error::InvalidParameter(
                        "corrupted-instance radius needs a true label or oracle".into(),
                    ))
                }
            };
            Target::Fixed(truth)
        }
        RobustnessKind::ErrorRegion => {
            let oracle = oracle.ok_or_else(|| {
                Error::InvalidParameter("error-region radius needs a ground-truth oracle".into())
            })?;
            Target::Oracle(oracle)
        }
    };

    let broken = |state: &DensityMatrix| -> Result<bool> {
        let pred = match try_predict(h, state)? {
            Some(p) => p,
            None => return Ok(false),
        };
        match &target {
            Target::Fixed(label) => Ok(pred != *label),
            Target::Oracle(o) => match o.true_class(state) {
                Ok(truth) => Ok(pred != truth),
                // Truth undefined there: cannot certify an error region.
                Err(Error::OracleUndefined(_)) => Ok(false),
                Err(e) => Err(e),
            },
        }
    };

    if broken(sigma)? {
        return Ok(AdversarialRadius {
            kind,
            radius: 0.0,
            witness: Some(sigma.clone()),
            analytic_lower_bound,
        });
    }

    let dim = sigma.dim();
    let mut targets: Vec<DensityMatrix> = Vec::new();
    for i in 0..dim {
        let mut probs = vec![0.0; dim];
        probs[i] = 1.0;
        targets.push(DensityMatrix::from_diagonal(&probs)?);
    }
    targets.push(DensityMatrix::maximally_mixed(dim)?);
    let mut rng = ChaCha12Rng::seed_from_u64(search.seed);
    for r in 0..search.restarts {
        targets.push(if r % 2 == 0 {
            random_density_matrix(&mut rng, dim)?
        } else {
            random_pure_state(&mut rng, dim)?
        });
    }

    const COARSE_STEPS: usize = 16;
    let mut best: Option<(f64, DensityMatrix)> = None;
    for target_state in &targets {
        let full_distance = trace_distance(sigma, target_state)?;
        if full_distance < 1e-14 {
            continue;
        }
        // Prune: this path cannot beat the current best.
        if let Some((best_radius, _)) = &best {
            if full_distance * (1.0 / COARSE_STEPS as f64) > *best_radius {
                // Even the first coarse step is farther than the best found;
                // a finer scan below could still help, so only skip when the
                // whole path starts beyond the best radius.
            }
        }
        let at = |t: f64| -> Result<DensityMatrix> {
            DensityMatrix::mix(&[(1.0 - t, sigma), (t, target_state)])
        };
        let mut bracket = None;
        for k in 1..=COARSE_STEPS {
            let t = k as f64 / COARSE_STEPS as f64;
            if broken(&at(t)?)? {
                bracket = Some(((k - 1) as f64 / COARSE_STEPS as f64, t));
                break;
            }
        }
        let (mut lo, mut hi) = match bracket {
            Some(b) => b,
            None => continue,
        };
        for _ in 0..search.steps.min(64) {
            let mid = 0.5 * (lo + hi);
            if broken(&at(mid)?)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // Mixture paths are trace-distance linear: tau(sigma, at(t)) = t * full.
        let radius = hi * full_distance;
        if best.as_ref().map_or(true, |(r, _)| radius < *r) {
            best = Some((radius, at(hi)?));
        }
    }

    Ok(match best {
        Some((radius, witness)) => AdversarialRadius {
            kind,
            radius,
            witness: Some(witness),
            analytic_lower_bound,
        },
        None => AdversarialRadius { kind, radius: f64::INFINITY, witness: None, analytic_lower_bound },
    })
}

/// Weighted mean adversarial radius over an ensemble (infinite if any item
/// has no witness at all).
pub fn expected_adversarial_radius(
    h: &ScoreClassifier,
    e: &LabeledEnsemble,
    kind: RobustnessKind,
    oracle: Option<&dyn GroundTruth>,
    search: &SearchBudget,
) -> Result<MetricValue> {
    let mut acc = 0.0;
    for item in e.items() {
        let r = adversarial_radius(h, &item.state, kind, Some(item.label), oracle, search)?;
        acc += item.weight * r.radius;
    }
    let metric_kind = match kind {
        RobustnessKind::CorruptedInstance => MetricKind::AdversarialRadiusCorruptedInstance,
        RobustnessKind::PredictionChange => MetricKind::AdversarialRadiusPredictionChange,
        RobustnessKind::ErrorRegion => MetricKind::AdversarialRadiusErrorRegion,
    };
    MetricValue::with_method(
        metric_kind,
        acc,
        Method::NumericSearch { restarts: search.restarts },
        None,
    )
}

/// Usefulness of a feature: `E[c * f(sigma)]` over a binary ensemble.
pub fn feature_usefulness(f: &FeatureOperator, e: &LabeledEnsemble) -> Result<f64> {
    if !e.is_binary() {
        return Err(Error::NonBinaryLabels);
    }
    let mut acc = 0.0;
    for item in e.items() {
        acc += item.weight * item.label.binary_sign()? * f.eval(&item.state)?;
    }
    Ok(acc)
}

/// Robust usefulness: per item, the worst (infimum) of `c * f` over the
/// supplied perturbation family, then the weighted expectation. With only
/// the identity in the family this equals [`feature_usefulness`].
pub fn feature_robustness(
    f: &FeatureOperator,
    e: &LabeledEnsemble,
    family: &[Perturbation],
) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("perturbation family is empty".into()));
    }
    if !e.is_binary() {
        return Err(Error::NonBinaryLabels);
    }
    let mut worst: Vec<f64> = vec![f64::INFINITY; e.len()];
    for p in family {
        let corrupted = p.apply_to_ensemble(e)?;
        for (i, (item, image)) in e.items().iter().zip(corrupted.items()).enumerate() {
            let v = item.label.binary_sign()? * f.eval(&image.state)?;
            if v < worst[i] {
                worst[i] = v;
            }
        }
    }
    let mut acc = 0.0;
    for (item, w) in e.items().iter().zip(worst.iter()) {
        acc += item.weight * w;
    }
    Ok(acc)
}

/// How the perturbation acted on one feature across the whole ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureStructure {
    /// Value unchanged on every item.
    Fixed,
    /// Value exactly sign-flipped on every item.
    Flipped,
    /// Neither: the idealized split does not apply to this feature.
    Mixed,
}

/// One feature's contribution to the loss gap.
#[derive(Debug, Clone)]
pub struct FeatureGap {
    pub name: String,
    pub weight: f64,
    /// `-E[c * w_l * H_l(sigma)]`.
    pub clean_term: f64,
    /// `-E[c * w_l * H_l(sigma~)]`.
    pub corrupted_term: f64,
    /// `corrupted_term - clean_term`.
    pub gap: f64,
    pub structure: FeatureStructure,
}

/// Loss model for the gap decomposition.
pub enum GapLoss<'a> {
    /// `-c * H`: the gap decomposes exactly feature-by-feature.
    Linear,
    /// `-c * link(H)` for a `constant`-Lipschitz link; the gap is bounded,
    /// not decomposed.
    Lipschitz { constant: f64, link: &'a dyn Fn(f64) -> f64 },
}

/// Per-feature decomposition of the clean-vs-corrupted loss gap for a
/// weighted-feature-sum threshold model.
#[derive(Debug, Clone)]
pub struct FeatureGapReport {
    pub per_feature: Vec<FeatureGap>,
    pub clean_loss: f64,
    pub corrupted_loss: f64,
    /// `corrupted_loss - clean_loss`, measured directly.
    pub total_gap: f64,
    /// Whether every feature was either fixed or exactly sign-flipped.
    pub flip_structure_holds: bool,
    /// Indices of features that were neither fixed nor flipped.
    pub structure_violators: Vec<usize>,
    /// `E[c * sum_{flipped l} w_l H_l(sigma)]`.
    pub nonrobust_correlation: f64,
    /// `2K |E[c * sum_{flipped} w_l H_l]|` — tight only when the per-item
    /// sign of the flipped-feature sum never varies.
    pub published_gap_bound: f64,
    /// `2K E|sum_{flipped} w_l H_l|` — always valid under the flip structure.
    pub pointwise_gap_bound: f64,
    /// Whether every per-item value `c_i * sum_{flipped} w_l H_l(sigma_i)`
    /// carries one sign, which makes the two bounds coincide.
    pub sign_constancy_holds: bool,
    /// `|total_gap| <= published_gap_bound` (within tolerance).
    pub bound_verified: bool,
}

/// Decompose the robustness gap of a weighted-feature-sum threshold
/// classifier feature-by-feature.
///
/// With the linear loss the decomposition is exact: the per-feature gaps sum
/// to the total. With a Lipschitz link the function instead verifies the
/// aggregate bound `|gap| <= 2K |E c sum_{flipped} w_l H_l|`, which is tight
/// only when the flipped-feature sums do not change sign across items; the
/// report carries both this bound and the always-valid pointwise variant.
pub fn per_feature_gap_decomposition(
    h: &ScoreClassifier,
    e: &LabeledEnsemble,
    p: &Perturbation,
    loss: GapLoss<'_>,
) -> Result<FeatureGapReport> {
    let terms = match (h.decision(), h.score_fns()) {
        (Decision::SignThreshold { .. }, [ScoreFn::WeightedFeatureSum(terms)]) => terms,
        _ => {
            return Err(Error::InvalidParameter(
                "gap decomposition needs a weighted-feature-sum threshold classifier".into(),
            ))
        }
    };
    let corrupted = p.apply_to_ensemble(e)?;
    let n_items = e.len();
    let n_features = terms.len();

    // Feature values on clean and corrupted states.
    let mut clean_values = vec![vec![0.0; n_items]; n_features];
    let mut corrupted_values = vec![vec![0.0; n_items]; n_features];
    for (i, (item, image)) in e.items().iter().zip(corrupted.items()).enumerate() {
        for (l, term) in terms.iter().enumerate() {
            clean_values[l][i] = term.feature.eval(&item.state)?;
            corrupted_values[l][i] = term.feature.eval(&image.state)?;
        }
    }
    let signs: Result<Vec<f64>> = e.items().iter().map(|it| it.label.binary_sign()).collect();
    let signs = signs?;
    let weights: Vec<f64> = e.items().iter().map(|it| it.weight).collect();

    let mut per_feature = Vec::with_capacity(n_features);
    let mut structure_violators = Vec::new();
    for (l, term) in terms.iter().enumerate() {
        let mut clean_term = 0.0;
        let mut corrupted_term = 0.0;
        let mut max_fixed_defect = 0.0f64;
        let mut max_flip_defect = 0.0f64;
        for i in 0..n_items {
            clean_term -= weights[i] * signs[i] * term.weight * clean_values[l][i];
            corrupted_term -= weights[i] * signs[i] * term.weight * corrupted_values[l][i];
            max_fixed_defect = max_fixed_defect.max((corrupted_values[l][i] - clean_values[l][i]).abs());
            max_flip_defect = max_flip_defect.max((corrupted_values[l][i] + clean_values[l][i]).abs());
        }
        let structure = if max_fixed_defect <= FLIP_STRUCTURE_TOLERANCE {
            FeatureStructure::Fixed
        } else if max_flip_defect <= FLIP_STRUCTURE_TOLERANCE {
            FeatureStructure::Flipped
        } else {
            structure_violators.push(l);
            FeatureStructure::Mixed
        };
        per_feature.push(FeatureGap {
            name: term.feature.name.clone(),
            weight: term.weight,
            clean_term,
            corrupted_term,
            gap: corrupted_term - clean_term,
            structure,
        });
    }
    let flip_structure_holds = structure_violators.is_empty();

    // Correlation carried by the flipped features.
    let mut nonrobust_correlation = 0.0;
    let mut pointwise_abs = 0.0;
    let mut saw_positive = false;
    let mut saw_negative = false;
    for i in 0..n_items {
        let mut flipped_sum = 0.0;
        for (l, term) in terms.iter().enumerate() {
            if per_feature[l].structure == FeatureStructure::Flipped {
                flipped_sum += term.weight * clean_values[l][i];
            }
        }
        let signed = signs[i] * flipped_sum;
        nonrobust_correlation += weights[i] * signed;
        pointwise_abs += weights[i] * signed.abs();
        if signed > FLIP_STRUCTURE_TOLERANCE {
            saw_positive = true;
        }
        if signed < -FLIP_STRUCTURE_TOLERANCE {
            saw_negative = true;
        }
    }
    let sign_constancy_holds = !(saw_positive && saw_negative);

    let (constant, clean_loss, corrupted_loss) = match loss {
        GapLoss::Linear => {
            let clean: f64 = per_feature.iter().map(|g| g.clean_term).sum();
            let corrupted: f64 = per_feature.iter().map(|g| g.corrupted_term).sum();
            (1.0, clean, corrupted)
        }
        GapLoss::Lipschitz { constant, link } => {
            if constant < 0.0 {
                return Err(Error::InvalidParameter("Lipschitz constant must be >= 0".into()));
            }
            let mut clean = 0.0;
            let mut corrupted = 0.0;
            for i in 0..n_items {
                let mut h_clean = 0.0;
                let mut h_corrupted = 0.0;
                for (l, term) in terms.iter().enumerate() {
                    h_clean += term.weight * clean_values[l][i];
                    h_corrupted += term.weight * corrupted_values[l][i];
                }
                clean -= weights[i] * signs[i] * link(h_clean);
                corrupted -= weights[i] * signs[i] * link(h_corrupted);
            }
            (constant, clean, corrupted)
        }
    };
    let total_gap = corrupted_loss - clean_loss;
    let published_gap_bound = 2.0 * constant * nonrobust_correlation.abs();
    let pointwise_gap_bound = 2.0 * constant * pointwise_abs;
    let bound_verified = total_gap.abs() <= published_gap_bound + FLIP_STRUCTURE_TOLERANCE;

    Ok(FeatureGapReport {
        per_feature,
        clean_loss,
        corrupted_loss,
        total_gap,
        flip_structure_holds,
        structure_violators,
        nonrobust_correlation,
        published_gap_bound,
        pointwise_gap_bound,
        sign_constancy_holds,
        bound_verified,
    })
}

/// Split of excess risk into estimation and approximation parts.
#[derive(Debug, Clone, Copy)]
pub struct ErrorDecomposition {
    /// Trained-model loss minus best-in-class loss.
    pub generalisation_error: f64,
    /// Best-in-class loss minus Bayes loss.
    pub approximation_error: f64,
    /// Their sum: trained-model loss minus Bayes loss.
    pub excess_risk: f64,
}

/// Decompose `loss(trained) - loss(bayes)` through the best-in-class loss.
pub fn error_decomposition(
    loss_trained: f64,
    loss_best_in_class: f64,
    loss_bayes: f64,
) -> ErrorDecomposition {
    let generalisation_error = loss_trained - loss_best_in_class;
    let approximation_error = loss_best_in_class - loss_bayes;
    ErrorDecomposition {
        generalisation_error,
        approximation_error,
        excess_risk: generalisation_error + approximation_error,
    }
}
