//! Quantum states, labeled ensembles, scalar features, and ground-truth
//! labeling rules.
//!
//! A [`DensityMatrix`] is validated on construction (Hermitian, unit trace,
//! positive semidefinite up to tolerance) so that everything downstream can
//! assume a physical state. A [`LabeledEnsemble`] is a finite weighted set of
//! states with 1-based class labels; binary problems use labels `1` (plus)
//! and `2` (minus).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
// Needed in pure no_std builds; test builds pull std into the crate graph
// (via dev-dependencies), and std's inherent f64 methods then shadow these.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eigendecomposition, ComplexMatrix};

/// Tolerance on `|Tr(rho) - 1|` for a valid state.
pub const TRACE_TOLERANCE: f64 = 1e-12;

/// Lower bound on eigenvalues of a valid state (numerical dust allowance).
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;

/// Tolerance under which a feature value counts as a sign tie.
pub const FEATURE_TIE_TOLERANCE: f64 = 1e-12;

/// 1-based class label. Binary problems use `Label::PLUS` / `Label::MINUS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

impl Label {
    /// Positive class in binary problems.
    pub const PLUS: Label = Label(1);
    /// Negative class in binary problems.
    pub const MINUS: Label = Label(2);

    /// `+1.0` for the positive class, `-1.0` for the negative class.
    pub fn binary_sign(self) -> Result<f64> {
        match self {
            Label::PLUS => Ok(1.0),
            Label::MINUS => Ok(-1.0),
            _ => Err(Error::NonBinaryLabels),
        }
    }

    /// Inverse of [`Label::binary_sign`]: positive values map to the positive
    /// class, negative values to the negative class.
    pub fn from_sign(sign: f64) -> Result<Label> {
        if sign > 0.0 {
            Ok(Label::PLUS)
        } else if sign < 0.0 {
            Ok(Label::MINUS)
        } else {
            Err(Error::NonBinaryLabels)
        }
    }

    /// The other binary label.
    pub fn binary_flip(self) -> Result<Label> {
        match self {
            Label::PLUS => Ok(Label::MINUS),
            Label::MINUS => Ok(Label::PLUS),
            _ => Err(Error::NonBinaryLabels),
        }
    }
}

/// Validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validate and wrap a matrix as a state.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        matrix.require_hermitian()?;
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOLERANCE || tr.im.abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "trace must be 1, got {} + {}i",
                tr.re, tr.im
            )));
        }
        let eig = hermitian_eigendecomposition(&matrix)?;
        if let Some(&min) = eig.values.first() {
            if min < -POSITIVITY_TOLERANCE {
                return Err(Error::InvalidState(format!(
                    "matrix has negative eigenvalue {min}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// Pure state `|psi><psi|`; the amplitude vector is normalized here.
    pub fn pure(ket: &[Complex64]) -> Result<Self> {
        let norm_sqr: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        if norm_sqr <= 0.0 {
            return Err(Error::InvalidState("zero amplitude vector".into()));
        }
        let scale = 1.0 / norm_sqr.sqrt();
        let normalized: Vec<Complex64> = ket.iter().map(|&z| z * scale).collect();
        Self::new(ComplexMatrix::outer(&normalized)?)
    }

    /// Diagonal state from a probability vector.
    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_diagonal(probs)?)
    }

    /// `I/d`.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        let m = ComplexMatrix::identity(dim)?;
        Self::new(m.scale(1.0 / dim as f64))
    }

    /// Pure qubit state at Bloch angles `(theta, phi)`:
    /// `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`.
    pub fn bloch(theta: f64, phi: f64) -> Result<Self> {
        let half = theta / 2.0;
        Self::pure(&[
            Complex64::new(half.cos(), 0.0),
            Complex64::new(half.sin() * phi.cos(), half.sin() * phi.sin()),
        ])
    }

    /// Convex combination of states. Weights must be nonnegative and sum to 1.
    pub fn mix(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidState("empty mixture".into()));
        }
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if (total - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let dim = parts[0].1.dim();
        let mut acc = ComplexMatrix::zeros(dim)?;
        for (w, state) in parts {
            if *w < 0.0 {
                return Err(Error::InvalidState(format!("negative mixture weight {w}")));
            }
            acc = acc.add(&state.matrix.scale(*w))?;
        }
        Self::new(acc)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `Tr(obs * rho)` for a Hermitian observable.
    pub fn expectation(&self, obs: &ComplexMatrix) -> Result<f64> {
        obs.require_hermitian()?;
        obs.trace_product_re(&self.matrix)
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.matrix
            .trace_product_re(&self.matrix)
            .expect("same dimension by construction")
    }
}

/// One ensemble member: a state with its sampling weight and true class.
#[derive(Debug, Clone)]
pub struct WeightedState {
    pub weight: f64,
    pub state: DensityMatrix,
    pub label: Label,
}

/// Finite weighted ensemble of labeled states.
///
/// Weights are nonnegative and sum to 1; labels lie in `1..=num_classes`;
/// all states share one dimension.
#[derive(Debug, Clone)]
pub struct LabeledEnsemble {
    items: Vec<WeightedState>,
    num_classes: u32,
}

impl LabeledEnsemble {
    pub fn new(items: Vec<WeightedState>, num_classes: u32) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidEnsemble(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if items.is_empty() {
            return Err(Error::InvalidEnsemble("ensemble has no items".into()));
        }
        let dim = items[0].state.dim();
        let mut total = 0.0;
        for (i, item) in items.iter().enumerate() {
            if item.state.dim() != dim {
                return Err(Error::DimensionMismatch(item.state.dim(), dim));
            }
            if item.weight < 0.0 || !item.weight.is_finite() {
                return Err(Error::InvalidEnsemble(format!(
                    "item {i} has invalid weight {}",
                    item.weight
                )));
            }
            if item.label.0 == 0 || item.label.0 > num_classes {
                return Err(Error::InvalidEnsemble(format!(
                    "item {i} has label {} outside 1..={num_classes}",
                    item.label.0
                )));
            }
            total += item.weight;
        }
        if (total - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidEnsemble(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { items, num_classes })
    }

    /// Equal-weight ensemble over the given labeled states.
    pub fn uniform(states: Vec<(DensityMatrix, Label)>, num_classes: u32) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidEnsemble("ensemble has no items".into()));
        }
        let w = 1.0 / n as f64;
        Self::new(
            states
                .into_iter()
                .map(|(state, label)| WeightedState { weight: w, state, label })
                .collect(),
            num_classes,
        )
    }

    pub fn items(&self) -> &[WeightedState] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items[0].state.dim()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    /// Total weight carried by one class.
    pub fn class_weight(&self, label: Label) -> f64 {
        self.items
            .iter()
            .filter(|it| it.label == label)
            .map(|it| it.weight)
            .sum()
    }

    /// Binary ensemble with both class priors equal to 1/2 (within `tol`).
    pub fn is_binary_unbiased(&self, tol: f64) -> bool {
        self.is_binary() && (self.class_weight(Label::PLUS) - 0.5).abs() <= tol
    }

    /// Unit-trace class-conditional aggregate state
    /// `(1/W_c) sum_{i in class c} w_i rho_i`.
    pub fn class_aggregate(&self, label: Label) -> Result<DensityMatrix> {
        let w_class = self.class_weight(label);
        if w_class <= 0.0 {
            return Err(Error::EmptyClass(label.0));
        }
        let parts: Vec<(f64, &DensityMatrix)> = self
            .items
            .iter()
            .filter(|it| it.label == label)
            .map(|it| (it.weight / w_class, &it.state))
            .collect();
        DensityMatrix::mix(&parts)
    }

    /// Replace every state through `f`, keeping weights and labels.
    pub fn map_states(
        &self,
        mut f: impl FnMut(&DensityMatrix) -> Result<DensityMatrix>,
    ) -> Result<Self> {
        let mut items = Vec::with_capacity(self.items.len());
        for it in &self.items {
            items.push(WeightedState {
                weight: it.weight,
                state: f(&it.state)?,
                label: it.label,
            });
        }
        Self::new(items, self.num_classes)
    }

    /// Partition a binary ensemble by the sign of one feature, returning the
    /// four class-sign x feature-sign cells with their within-class weights
    /// and unit-trace aggregates.
    ///
    /// A feature value within [`FEATURE_TIE_TOLERANCE`] of zero is a tie and
    /// an error. Empty cells are an error unless `allow_empty` is set.
    pub fn feature_partition(
        &self,
        feature: &FeatureOperator,
        allow_empty: bool,
    ) -> Result<FeaturePartition> {
        if !self.is_binary() {
            return Err(Error::NonBinaryLabels);
        }
        let mut cells: Vec<PartitionCell> = Vec::with_capacity(4);
        for &class_sign in &[1i8, -1i8] {
            for &feature_sign in &[1i8, -1i8] {
                cells.push(PartitionCell {
                    class_sign,
                    feature_sign,
                    weight_within_class: 0.0,
                    aggregate: None,
                    item_indices: Vec::new(),
                });
            }
        }
        let mut cell_weights = [0.0f64; 4];
        for (idx, item) in self.items.iter().enumerate() {
            let value = feature.eval(&item.state)?;
            if value.abs() < FEATURE_TIE_TOLERANCE {
                return Err(Error::FeatureTie { item: idx, value });
            }
            let class_sign = item.label.binary_sign()? as i8;
            let feature_sign = if value > 0.0 { 1i8 } else { -1i8 };
            let slot = cell_index(class_sign, feature_sign);
            cells[slot].item_indices.push(idx);
            cell_weights[slot] += item.weight;
        }
        for (slot, cell) in cells.iter_mut().enumerate() {
            let class_label = if cell.class_sign > 0 { Label::PLUS } else { Label::MINUS };
            let w_class = self.class_weight(class_label);
            if w_class <= 0.0 {
                return Err(Error::EmptyClass(class_label.0));
            }
            cell.weight_within_class = cell_weights[slot] / w_class;
            if cell.item_indices.is_empty() {
                if !allow_empty {
                    return Err(Error::EmptyPartitionCell {
                        class_sign: cell.class_sign,
                        feature_sign: cell.feature_sign,
                    });
                }
                continue;
            }
            let cell_total = cell_weights[slot];
            let parts: Vec<(f64, &DensityMatrix)> = cell
                .item_indices
                .iter()
                .map(|&i| (self.items[i].weight / cell_total, &self.items[i].state))
                .collect();
            cell.aggregate = Some(DensityMatrix::mix(&parts)?);
        }
        let cells: [PartitionCell; 4] = cells
            .try_into()
            .expect("exactly four cells constructed");
        Ok(FeaturePartition { cells })
    }
}

fn cell_index(class_sign: i8, feature_sign: i8) -> usize {
    let a = if class_sign > 0 { 0 } else { 1 };
    let b = if feature_sign > 0 { 0 } else { 1 };
    a * 2 + b
}

/// Scalar feature of a state.
#[derive(Debug, Clone)]
pub enum FeatureKind {
    /// `Tr(op * rho)` for a Hermitian operator.
    Expectation(ComplexMatrix),
    /// `Tr(rho^2)` — invariant under every unitary channel.
    Purity,
}

/// Named scalar feature map on states.
#[derive(Debug, Clone)]
pub struct FeatureOperator {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureOperator {
    pub fn expectation(name: impl Into<String>, op: ComplexMatrix) -> Result<Self> {
        op.require_hermitian()?;
        Ok(Self { name: name.into(), kind: FeatureKind::Expectation(op) })
    }

    pub fn purity(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: FeatureKind::Purity }
    }

    pub fn eval(&self, state: &DensityMatrix) -> Result<f64> {
        match &self.kind {
            FeatureKind::Expectation(op) => state.expectation(op),
            FeatureKind::Purity => Ok(state.purity()),
        }
    }
}

/// One cell of a class-sign x feature-sign partition.
#[derive(Debug, Clone)]
pub struct PartitionCell {
    pub class_sign: i8,
    pub feature_sign: i8,
    /// Cell weight divided by its class weight.
    pub weight_within_class: f64,
    /// Unit-trace aggregate of the cell, `None` when the cell is empty.
    pub aggregate: Option<DensityMatrix>,
    pub item_indices: Vec<usize>,
}

/// The four cells of a binary feature partition.
#[derive(Debug, Clone)]
pub struct FeaturePartition {
    cells: [PartitionCell; 4],
}

impl FeaturePartition {
    pub fn cell(&self, class_sign: i8, feature_sign: i8) -> &PartitionCell {
        &self.cells[cell_index(class_sign, feature_sign)]
    }

    pub fn cells(&self) -> &[PartitionCell; 4] {
        &self.cells
    }

    /// Within-class weight of the cell whose feature sign matches its class
    /// sign (the "feature agrees with the label" fraction for that class).
    pub fn agreement_weight(&self, class_sign: i8) -> f64 {
        self.cell(class_sign, class_sign).weight_within_class
    }
}

/// Region of the Bloch sphere to draw pure qubit states from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlochRegion {
    FullSphere,
    /// Open upper cap: `z in (0, 1]`.
    UpperHemisphere,
    /// Open lower cap: `z in [-1, 0)`.
    LowerHemisphere,
    /// `|z| <= sin(half_width)` for `half_width` in `[0, pi/2]` radians.
    EquatorBand { half_width: f64 },
}

/// Draw a Haar-like pure qubit state restricted to `region`: `z = cos(theta)`
/// uniform on the allowed interval, azimuth uniform on `[0, 2*pi)`.
pub fn sample_bloch_qubit<R: Rng + ?Sized>(
    rng: &mut R,
    region: BlochRegion,
) -> Result<DensityMatrix> {
    let z = match region {
        BlochRegion::FullSphere => rng.random_range(-1.0..=1.0),
        // 1 - u for u in [0,1) keeps the cap open at the equator.
        BlochRegion::UpperHemisphere => 1.0 - rng.random_range(0.0..1.0),
        BlochRegion::LowerHemisphere => rng.random_range(0.0..1.0) - 1.0,
        BlochRegion::EquatorBand { half_width } => {
            if !(0.0..=core::f64::consts::FRAC_PI_2).contains(&half_width) {
                return Err(Error::InvalidParameter(format!(
                    "equator band half-width must lie in [0, pi/2], got {half_width}"
                )));
            }
            let cap = half_width.sin();
            if cap == 0.0 { 0.0 } else { rng.random_range(-cap..=cap) }
        }
    };
    let phi = rng.random_range(0.0..core::f64::consts::TAU);
    let theta = z.clamp(-1.0, 1.0).acos();
    DensityMatrix::bloch(theta, phi)
}

/// Haar-random pure state of dimension `dim`.
pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<DensityMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let mut ket = vec![Complex64::new(0.0, 0.0); dim];
    loop {
        let mut norm_sqr = 0.0;
        for z in ket.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z = Complex64::new(re, im);
            norm_sqr += z.norm_sqr();
        }
        if norm_sqr > 1e-12 {
            break;
        }
    }
    DensityMatrix::pure(&ket)
}

/// Random full-rank mixed state: `G G' / Tr(G G')` for a complex Gaussian
/// matrix `G`.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<DensityMatrix> {
    loop {
        let mut g = ComplexMatrix::zeros(dim)?;
        for i in 0..dim {
            for j in 0..dim {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                g.set(i, j, Complex64::new(re, im));
            }
        }
        let gram = g.matmul(&g.adjoint())?;
        let tr = gram.trace().re;
        if tr > 1e-9 {
            // hermitized: G G' is Hermitian in exact arithmetic.
            return DensityMatrix::new(gram.scale(1.0 / tr).hermitized());
        }
    }
}

/// Ground-truth labeling rule: assigns the true class of a state.
pub trait GroundTruth {
    fn true_class(&self, state: &DensityMatrix) -> Result<Label>;
}

/// Labels a qubit by hemisphere: `<0|rho|0> > 1/2` is the positive class,
/// everything else (including the equator) the negative class.
#[derive(Debug, Clone, Copy)]
pub struct HemisphereOracle;

impl GroundTruth for HemisphereOracle {
    fn true_class(&self, state: &DensityMatrix) -> Result<Label> {
        let p0 = state.matrix().get(0, 0).re;
        Ok(if p0 > 0.5 { Label::PLUS } else { Label::MINUS })
    }
}

/// Labels by the sign of `Tr(obs * rho)`; values within `tie_tolerance` of
/// zero are undefined.
#[derive(Debug, Clone)]
pub struct ObservableSignOracle {
    pub observable: ComplexMatrix,
    pub tie_tolerance: f64,
}

impl ObservableSignOracle {
    pub fn new(observable: ComplexMatrix, tie_tolerance: f64) -> Result<Self> {
        observable.require_hermitian()?;
        Ok(Self { observable, tie_tolerance })
    }
}

impl GroundTruth for ObservableSignOracle {
    fn true_class(&self, state: &DensityMatrix) -> Result<Label> {
        let v = state.expectation(&self.observable)?;
        if v > self.tie_tolerance {
            Ok(Label::PLUS)
        } else if v < -self.tie_tolerance {
            Ok(Label::MINUS)
        } else {
            Err(Error::OracleUndefined(format!(
                "observable value {v} within tie tolerance {}",
                self.tie_tolerance
            )))
        }
    }
}

/// Adapter turning any closure into a ground-truth rule.
pub struct RuleOracle<F>(pub F);

impl<F: Fn(&DensityMatrix) -> Result<Label>> GroundTruth for RuleOracle<F> {
    fn true_class(&self, state: &DensityMatrix) -> Result<Label> {
        (self.0)(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn bloch_poles() {
        let north = DensityMatrix::bloch(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(north.matrix().get(0, 0).re, 1.0, epsilon = 1e-15);
        let south = DensityMatrix::bloch(core::f64::consts::PI, 0.0).unwrap();
        assert_abs_diff_eq!(south.matrix().get(1, 1).re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(north.purity(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_unnormalized_trace() {
        let m = ComplexMatrix::from_diagonal(&[0.6, 0.6]).unwrap();
        assert!(matches!(DensityMatrix::new(m), Err(Error::InvalidState(_))));
    }

    #[test]
    fn rejects_negative_eigenvalue() {
        let m = ComplexMatrix::from_diagonal(&[1.2, -0.2]).unwrap();
        assert!(matches!(DensityMatrix::new(m), Err(Error::InvalidState(_))));
    }

    #[test]
    fn ensemble_weight_validation() {
        let s = DensityMatrix::maximally_mixed(2).unwrap();
        let items = vec![
            WeightedState { weight: 0.6, state: s.clone(), label: Label::PLUS },
            WeightedState { weight: 0.6, state: s, label: Label::MINUS },
        ];
        assert!(matches!(
            LabeledEnsemble::new(items, 2),
            Err(Error::InvalidEnsemble(_))
        ));
    }

    #[test]
    fn class_aggregate_matches_hand_mix() {
        let a = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::from_diagonal(&[0.0, 1.0]).unwrap();
        let c = DensityMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        let e = LabeledEnsemble::new(
            vec![
                WeightedState { weight: 0.25, state: a, label: Label::PLUS },
                WeightedState { weight: 0.25, state: b, label: Label::PLUS },
                WeightedState { weight: 0.5, state: c, label: Label::MINUS },
            ],
            2,
        )
        .unwrap();
        let agg = e.class_aggregate(Label::PLUS).unwrap();
        assert_abs_diff_eq!(agg.matrix().get(0, 0).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(agg.matrix().get(1, 1).re, 0.5, epsilon = 1e-15);
        assert!(matches!(
            LabeledEnsemble::uniform(
                vec![(DensityMatrix::maximally_mixed(2).unwrap(), Label::PLUS)],
                2
            )
            .unwrap()
            .class_aggregate(Label::MINUS),
            Err(Error::EmptyClass(2))
        ));
    }

    #[test]
    fn feature_partition_cells_and_weights() {
        // Feature: <Z>; plus-class items at z = +0.8 and z = -0.4,
        // minus-class items at z = -0.6 (twice).
        let z = ComplexMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        let feature = FeatureOperator::expectation("z", z).unwrap();
        let st = |p0: f64| DensityMatrix::from_diagonal(&[p0, 1.0 - p0]).unwrap();
        let e = LabeledEnsemble::new(
            vec![
                WeightedState { weight: 0.3, state: st(0.9), label: Label::PLUS },
                WeightedState { weight: 0.2, state: st(0.3), label: Label::PLUS },
                WeightedState { weight: 0.25, state: st(0.2), label: Label::MINUS },
                WeightedState { weight: 0.25, state: st(0.2), label: Label::MINUS },
            ],
            2,
        )
        .unwrap();
        let part = e.feature_partition(&feature, true).unwrap();
        assert_abs_diff_eq!(part.cell(1, 1).weight_within_class, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(part.cell(1, -1).weight_within_class, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(part.agreement_weight(-1), 1.0, epsilon = 1e-15);
        assert!(part.cell(-1, 1).aggregate.is_none());
        // Same partition without allow_empty must flag the empty cell.
        assert!(matches!(
            e.feature_partition(&feature, false),
            Err(Error::EmptyPartitionCell { class_sign: -1, feature_sign: 1 })
        ));
    }

    #[test]
    fn feature_tie_detected() {
        let z = ComplexMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        let feature = FeatureOperator::expectation("z", z).unwrap();
        let e = LabeledEnsemble::uniform(
            vec![
                (DensityMatrix::maximally_mixed(2).unwrap(), Label::PLUS),
                (DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap(), Label::MINUS),
            ],
            2,
        )
        .unwrap();
        assert!(matches!(
            e.feature_partition(&feature, true),
            Err(Error::FeatureTie { item: 0, .. })
        ));
    }

    #[test]
    fn hemisphere_oracle_labels() {
        let north = DensityMatrix::from_diagonal(&[0.9, 0.1]).unwrap();
        let south = DensityMatrix::from_diagonal(&[0.2, 0.8]).unwrap();
        assert_eq!(HemisphereOracle.true_class(&north).unwrap(), Label::PLUS);
        assert_eq!(HemisphereOracle.true_class(&south).unwrap(), Label::MINUS);
    }

    #[test]
    fn observable_oracle_tie() {
        let z = ComplexMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        let oracle = ObservableSignOracle::new(z, 1e-9).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(matches!(
            oracle.true_class(&mixed),
            Err(Error::OracleUndefined(_))
        ));
    }

    proptest! {
        #[test]
        fn sampled_states_live_in_region(seed in 0u64..1000, which in 0usize..4) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let region = match which {
                0 => BlochRegion::FullSphere,
                1 => BlochRegion::UpperHemisphere,
                2 => BlochRegion::LowerHemisphere,
                _ => BlochRegion::EquatorBand { half_width: 0.3 },
            };
            let s = sample_bloch_qubit(&mut rng, region).unwrap();
            let z = s.matrix().get(0, 0).re - s.matrix().get(1, 1).re;
            match region {
                BlochRegion::FullSphere => prop_assert!((-1.0..=1.0).contains(&z)),
                BlochRegion::UpperHemisphere => prop_assert!(z > 0.0 && z <= 1.0),
                BlochRegion::LowerHemisphere => prop_assert!(z < 0.0 && z >= -1.0),
                BlochRegion::EquatorBand { half_width } => {
                    prop_assert!(z.abs() <= half_width.sin() + 1e-12)
                }
            }
            prop_assert!((s.purity() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn random_mixed_states_are_valid(seed in 0u64..500, dim in 2usize..5) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let s = random_density_matrix(&mut rng, dim).unwrap();
            prop_assert!((s.matrix().trace().re - 1.0).abs() < 1e-12);
        }
    }
}
