//! Quantum channels in Kraus form, named single-qubit noise families, and
//! ensemble perturbations.
//!
//! A perturbation is either a channel applied to every state or an explicit
//! per-item replacement map. Perturbations are classified along two
//! independent axes: *small* (largest per-item trace distance at most a
//! budget) and *relevant* (some item's ground-truth class changes).

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
use crate::numerics::{hermitian_eigendecomposition, trace_distance, ComplexMatrix};
use crate::states::{DensityMatrix, FeatureOperator, GroundTruth, Label, LabeledEnsemble};

/// Tolerance on `sum E_k' E_k - I` for a complete Kraus family.
pub const KRAUS_TOLERANCE: f64 = 1e-10;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Pauli X on a qubit.
pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]])
        .expect("2x2 within bounds")
}

/// Pauli Y on a qubit.
pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]])
        .expect("2x2 within bounds")
}

/// Pauli Z on a qubit.
pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[1.0, -1.0]).expect("2x2 within bounds")
}

/// Completely positive trace-preserving map given by Kraus operators.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    name: String,
    ops: Vec<ComplexMatrix>,
}

impl KrausChannel {
    /// Validate the completeness relation `sum E_k' E_k = I` within
    /// [`KRAUS_TOLERANCE`].
    pub fn new(name: impl Into<String>, ops: Vec<ComplexMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidParameter("channel needs at least one Kraus operator".into()));
        }
        let dim = ops[0].dim();
        let mut sum = ComplexMatrix::zeros(dim)?;
        for op in &ops {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch(op.dim(), dim));
            }
            sum = sum.add(&op.adjoint().matmul(op)?)?;
        }
        let defect = sum.max_abs_diff(&ComplexMatrix::identity(dim)?)?;
        if defect > KRAUS_TOLERANCE {
            return Err(Error::IncompleteKraus(defect));
        }
        Ok(Self { name: name.into(), ops })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    /// `sum E_k m E_k'` on a raw matrix (state picture).
    pub fn apply_raw(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut out = ComplexMatrix::zeros(m.dim())?;
        for op in &self.ops {
            out = out.add(&op.matmul(m)?.matmul(&op.adjoint())?)?;
        }
        Ok(out)
    }

    /// Evolve a state; the result is validated as a state again.
    pub fn apply(&self, state: &DensityMatrix) -> Result<DensityMatrix> {
        // Hermitian in exact arithmetic; hermitize to shed rounding.
        DensityMatrix::new(self.apply_raw(state.matrix())?.hermitized())
    }

    /// Adjoint (measurement picture): `sum E_k' m E_k`. Satisfies
    /// `Tr(m * apply(rho)) = Tr(apply_to_measurement(m) * rho)`.
    pub fn apply_to_measurement(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut out = ComplexMatrix::zeros(m.dim())?;
        for op in &self.ops {
            out = out.add(&op.adjoint().matmul(m)?.matmul(op)?)?;
        }
        Ok(out)
    }
}

/// Standard single-qubit noise families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedChannel {
    /// `(1-p) rho + p X rho X`.
    BitFlip { p: f64 },
    /// `(1-p) rho + p Z rho Z`.
    PhaseFlip { p: f64 },
    /// Mixture of I, X, Y, Z conjugations with the given probabilities.
    Pauli { p: [f64; 4] },
    /// `(1-p) rho + p I/2`.
    Depolarizing { p: f64 },
}

impl NamedChannel {
    pub fn build(&self) -> Result<KrausChannel> {
        match *self {
            NamedChannel::BitFlip { p } => {
                check_probability("bit-flip", p)?;
                KrausChannel::new(
                    "bit-flip",
                    vec![
                        ComplexMatrix::identity(2)?.scale((1.0 - p).sqrt()),
                        pauli_x().scale(p.sqrt()),
                    ],
                )
            }
            NamedChannel::PhaseFlip { p } => {
                check_probability("phase-flip", p)?;
                KrausChannel::new(
                    "phase-flip",
                    vec![
                        ComplexMatrix::identity(2)?.scale((1.0 - p).sqrt()),
                        pauli_z().scale(p.sqrt()),
                    ],
                )
            }
            NamedChannel::Pauli { p } => {
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 || p.iter().any(|&x| x < 0.0) {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "pauli mixture probabilities must be nonnegative and sum to 1, got {p:?}"
                    )));
                }
                KrausChannel::new(
                    "pauli",
                    vec![
                        ComplexMatrix::identity(2)?.scale(p[0].sqrt()),
                        pauli_x().scale(p[1].sqrt()),
                        pauli_y().scale(p[2].sqrt()),
                        pauli_z().scale(p[3].sqrt()),
                    ],
                )
            }
            NamedChannel::Depolarizing { p } => {
                check_probability("depolarizing", p)?;
                KrausChannel::new(
                    "depolarizing",
                    vec![
                        ComplexMatrix::identity(2)?.scale((1.0 - 3.0 * p / 4.0).sqrt()),
                        pauli_x().scale((p / 4.0).sqrt()),
                        pauli_y().scale((p / 4.0).sqrt()),
                        pauli_z().scale((p / 4.0).sqrt()),
                    ],
                )
            }
        }
    }
}

fn check_probability(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(alloc::format!(
            "{what} probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Explicit per-item state replacement; `images[i]` replaces item `i`.
#[derive(Debug, Clone)]
pub struct EnsembleMap {
    pub images: Vec<DensityMatrix>,
}

/// A way of corrupting an ensemble.
#[derive(Debug, Clone)]
pub enum Perturbation {
    /// Apply one channel to every state.
    Channel(KrausChannel),
    /// Replace each state by a fixed image (weights and labels kept).
    EnsembleMap(EnsembleMap),
}

impl Perturbation {
    /// Produce the corrupted ensemble. Weights and labels are preserved.
    pub fn apply_to_ensemble(&self, e: &LabeledEnsemble) -> Result<LabeledEnsemble> {
        match self {
            Perturbation::Channel(ch) => e.map_states(|s| ch.apply(s)),
            Perturbation::EnsembleMap(map) => {
                if map.images.len() != e.len() {
                    return Err(Error::PartialEnsembleMap {
                        expected: e.len(),
                        got: map.images.len(),
                    });
                }
                let mut idx = 0;
                e.map_states(|_| {
                    let img = map.images[idx].clone();
                    idx += 1;
                    Ok(img)
                })
            }
        }
    }
}

/// Structured exchange perturbations built from an ensemble's own states.
#[derive(Debug, Clone, Copy)]
pub enum SwapKind<'a> {
    /// Exchange states across the two classes, pairing items in index order.
    /// Pairs must match weight-for-weight so that the swapped ensemble is the
    /// class-mirrored distribution.
    ClassSwap,
    /// Exchange states across the feature's sign *within each class*,
    /// pairing items in index order (weights stay with their item).
    FeatureSwap(&'a FeatureOperator),
}

/// Build the replacement map performing the requested exchange.
///
/// Returns [`Error::UnmatchablePartition`] listing the items left without a
/// partner (count mismatch, or weight mismatch for a class swap).
pub fn swap_perturbation(e: &LabeledEnsemble, kind: SwapKind<'_>) -> Result<Perturbation> {
    if !e.is_binary() {
        return Err(Error::NonBinaryLabels);
    }
    let mut images: Vec<Option<DensityMatrix>> = vec![None; e.len()];
    let mut pair_up = |left: Vec<usize>, right: Vec<usize>, match_weights: bool| -> Result<()> {
        let paired = left.len().min(right.len());
        let mut residual: Vec<usize> = Vec::new();
        for k in 0..paired {
            let (i, j) = (left[k], right[k]);
            if match_weights
                && (e.items()[i].weight - e.items()[j].weight).abs() > 1e-12
            {
                residual.push(i);
                residual.push(j);
                continue;
            }
            images[i] = Some(e.items()[j].state.clone());
            images[j] = Some(e.items()[i].state.clone());
        }
        residual.extend_from_slice(&left[paired..]);
        residual.extend_from_slice(&right[paired..]);
        if residual.is_empty() {
            Ok(())
        } else {
            Err(Error::UnmatchablePartition(residual))
        }
    };
    match kind {
        SwapKind::ClassSwap => {
            let plus: Vec<usize> = indices_where(e, |it| it.label == Label::PLUS);
            let minus: Vec<usize> = indices_where(e, |it| it.label == Label::MINUS);
            pair_up(plus, minus, true)?;
        }
        SwapKind::FeatureSwap(feature) => {
            for label in [Label::PLUS, Label::MINUS] {
                let mut pos = Vec::new();
                let mut neg = Vec::new();
                for (i, it) in e.items().iter().enumerate() {
                    if it.label != label {
                        continue;
                    }
                    let v = feature.eval(&it.state)?;
                    if v.abs() < crate::states::FEATURE_TIE_TOLERANCE {
                        return Err(Error::FeatureTie { item: i, value: v });
                    }
                    if v > 0.0 {
                        pos.push(i);
                    } else {
                        neg.push(i);
                    }
                }
                pair_up(pos, neg, false)?;
            }
        }
    }
    let images: Vec<DensityMatrix> = images
        .into_iter()
        .map(|img| img.expect("every index paired"))
        .collect();
    Ok(Perturbation::EnsembleMap(EnsembleMap { images }))
}

fn indices_where(
    e: &LabeledEnsemble,
    pred: impl Fn(&crate::states::WeightedState) -> bool,
) -> Vec<usize> {
    e.items()
        .iter()
        .enumerate()
        .filter(|(_, it)| pred(it))
        .map(|(i, _)| i)
        .collect()
}

/// Two-axis taxonomy of perturbations: size (small vs unrestricted) and
/// relevance (does any item's ground-truth class change).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationType {
    /// Small and label-preserving.
    I,
    /// Small but changes some ground-truth label.
    II,
    /// Unrestricted in size, label-preserving.
    III,
    /// Unrestricted in size and changes some ground-truth label.
    IV,
}

/// Outcome of classifying a perturbation against a budget and an oracle.
#[derive(Debug, Clone)]
pub struct PerturbationClass {
    pub kind: PerturbationType,
    /// Largest per-item trace distance between original and corrupted state.
    pub max_item_distance: f64,
    /// Index of an item whose ground-truth class changed, if any.
    pub label_change_witness: Option<usize>,
}

/// Classify a perturbation as type I-IV: *small* when every item moves by at
/// most `eps_max` in trace distance, *relevant* when some item's class under
/// `oracle` changes.
pub fn classify_perturbation(
    perturbation: &Perturbation,
    e: &LabeledEnsemble,
    oracle: &dyn GroundTruth,
    eps_max: f64,
) -> Result<PerturbationClass> {
    let corrupted = perturbation.apply_to_ensemble(e)?;
    let mut max_item_distance = 0.0f64;
    let mut label_change_witness = None;
    for (i, (a, b)) in e.items().iter().zip(corrupted.items().iter()).enumerate() {
        let d = trace_distance(&a.state, &b.state)?;
        if d > max_item_distance {
            max_item_distance = d;
        }
        if label_change_witness.is_none()
            && oracle.true_class(&a.state)? != oracle.true_class(&b.state)?
        {
            label_change_witness = Some(i);
        }
    }
    let small = max_item_distance <= eps_max;
    let relevant = label_change_witness.is_some();
    let kind = match (small, relevant) {
        (true, false) => PerturbationType::I,
        (true, true) => PerturbationType::II,
        (false, false) => PerturbationType::III,
        (false, true) => PerturbationType::IV,
    };
    Ok(PerturbationClass { kind, max_item_distance, label_change_witness })
}

/// Apply a channel to every state; optionally relabel each image with the
/// ground-truth rule so the result is the channel's pushforward of the task.
pub fn pushforward_ensemble(
    e: &LabeledEnsemble,
    channel: &KrausChannel,
    relabel: Option<&dyn GroundTruth>,
) -> Result<LabeledEnsemble> {
    let mapped = e.map_states(|s| channel.apply(s))?;
    match relabel {
        None => Ok(mapped),
        Some(oracle) => {
            let mut items = mapped.items().to_vec();
            for it in items.iter_mut() {
                it.label = oracle.true_class(&it.state)?;
            }
            LabeledEnsemble::new(items, mapped.num_classes())
        }
    }
}

/// Random channel with `num_ops` Kraus operators: Gaussian blocks `G_k`
/// normalized by `S^{-1/2}` where `S = sum G_k' G_k`.
pub fn random_kraus_channel<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    num_ops: usize,
) -> Result<KrausChannel> {
    if num_ops == 0 {
        return Err(Error::InvalidParameter("need at least one Kraus operator".into()));
    }
    let mut blocks = Vec::with_capacity(num_ops);
    let mut s = ComplexMatrix::zeros(dim)?;
    for _ in 0..num_ops {
        let mut g = ComplexMatrix::zeros(dim)?;
        for i in 0..dim {
            for j in 0..dim {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                g.set(i, j, Complex64::new(re, im));
            }
        }
        s = s.add(&g.adjoint().matmul(&g)?)?;
        blocks.push(g);
    }
    let eig = hermitian_eigendecomposition(&s.hermitized())?;
    let inv_sqrt = eig.map_values(|w| if w > 1e-12 { 1.0 / w.sqrt() } else { 0.0 })?;
    let ops: Result<Vec<ComplexMatrix>> = blocks.iter().map(|g| g.matmul(&inv_sqrt)).collect();
    KrausChannel::new("random", ops?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::random_density_matrix;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn bit_flip_action_on_basis_state() {
        let ch = NamedChannel::BitFlip { p: 0.3 }.build().unwrap();
        let zero = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let out = ch.apply(&zero).unwrap();
        assert_abs_diff_eq!(out.matrix().get(0, 0).re, 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(out.matrix().get(1, 1).re, 0.3, epsilon = 1e-14);
    }

    #[test]
    fn depolarizing_matches_convex_form() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let rho = random_density_matrix(&mut rng, 2).unwrap();
        for &p in &[0.0, 0.25, 0.6, 1.0] {
            let ch = NamedChannel::Depolarizing { p }.build().unwrap();
            let out = ch.apply(&rho).unwrap();
            let mixed = DensityMatrix::maximally_mixed(2).unwrap();
            let expected = DensityMatrix::mix(&[(1.0 - p, &rho), (p, &mixed)]).unwrap();
            assert!(out.matrix().max_abs_diff(expected.matrix()).unwrap() < 1e-13);
        }
    }

    #[test]
    fn incomplete_kraus_rejected() {
        let ops = vec![ComplexMatrix::identity(2).unwrap().scale(0.9)];
        assert!(matches!(
            KrausChannel::new("broken", ops),
            Err(Error::IncompleteKraus(_))
        ));
    }

    #[test]
    fn class_swap_round_trip() {
        let a = DensityMatrix::from_diagonal(&[0.9, 0.1]).unwrap();
        let b = DensityMatrix::from_diagonal(&[0.2, 0.8]).unwrap();
        let e = LabeledEnsemble::uniform(
            vec![(a.clone(), Label::PLUS), (b.clone(), Label::MINUS)],
            2,
        )
        .unwrap();
        let swap = swap_perturbation(&e, SwapKind::ClassSwap).unwrap();
        let out = swap.apply_to_ensemble(&e).unwrap();
        assert!(out.items()[0].state.matrix().max_abs_diff(b.matrix()).unwrap() < 1e-15);
        assert!(out.items()[1].state.matrix().max_abs_diff(a.matrix()).unwrap() < 1e-15);
        // labels and weights untouched
        assert_eq!(out.items()[0].label, Label::PLUS);
    }

    #[test]
    fn class_swap_detects_unmatched_items() {
        let a = DensityMatrix::from_diagonal(&[0.9, 0.1]).unwrap();
        let e = LabeledEnsemble::uniform(
            vec![
                (a.clone(), Label::PLUS),
                (a.clone(), Label::PLUS),
                (a, Label::MINUS),
            ],
            2,
        )
        .unwrap();
        assert!(matches!(
            swap_perturbation(&e, SwapKind::ClassSwap),
            Err(Error::UnmatchablePartition(_))
        ));
    }

    #[test]
    fn perturbation_taxonomy() {
        use crate::states::HemisphereOracle;
        let north = DensityMatrix::from_diagonal(&[0.95, 0.05]).unwrap();
        let south = DensityMatrix::from_diagonal(&[0.05, 0.95]).unwrap();
        let e = LabeledEnsemble::uniform(
            vec![(north, Label::PLUS), (south, Label::MINUS)],
            2,
        )
        .unwrap();
        // Gentle depolarizing: small, preserves hemisphere.
        let gentle = Perturbation::Channel(NamedChannel::Depolarizing { p: 0.05 }.build().unwrap());
        let class = classify_perturbation(&gentle, &e, &HemisphereOracle, 0.05).unwrap();
        assert_eq!(class.kind, PerturbationType::I);
        assert!(class.max_item_distance <= 0.05 + 1e-15);
        // Class swap: large and hemisphere-changing.
        let swap = swap_perturbation(&e, SwapKind::ClassSwap).unwrap();
        let class = classify_perturbation(&swap, &e, &HemisphereOracle, 0.05).unwrap();
        assert_eq!(class.kind, PerturbationType::IV);
        assert_eq!(class.label_change_witness, Some(0));
    }

    #[test]
    fn ensemble_map_length_checked() {
        let s = DensityMatrix::maximally_mixed(2).unwrap();
        let e = LabeledEnsemble::uniform(
            vec![(s.clone(), Label::PLUS), (s.clone(), Label::MINUS)],
            2,
        )
        .unwrap();
        let p = Perturbation::EnsembleMap(EnsembleMap { images: vec![s] });
        assert!(matches!(
            p.apply_to_ensemble(&e),
            Err(Error::PartialEnsembleMap { expected: 2, got: 1 })
        ));
    }

    proptest! {
        /// State-picture and measurement-picture applications agree:
        /// Tr(m * C(rho)) = Tr(C'(m) * rho).
        #[test]
        fn channel_duality(seed in 0u64..200) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let dim = 2 + (seed % 3) as usize;
            let ch = random_kraus_channel(&mut rng, dim, 3).unwrap();
            let rho = random_density_matrix(&mut rng, dim).unwrap();
            let m = {
                let raw = random_density_matrix(&mut rng, dim).unwrap();
                raw.matrix().scale(0.7)
            };
            let lhs = m.trace_product_re(ch.apply(&rho).unwrap().matrix()).unwrap();
            let rhs = ch
                .apply_to_measurement(&m)
                .unwrap()
                .trace_product_re(rho.matrix())
                .unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn random_channels_complete(seed in 0u64..200) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let ch = random_kraus_channel(&mut rng, 3, 4).unwrap();
            let mut sum = ComplexMatrix::zeros(3).unwrap();
            for op in ch.ops() {
                sum = sum.add(&op.adjoint().matmul(op).unwrap()).unwrap();
            }
            let id = ComplexMatrix::identity(3).unwrap();
            prop_assert!(sum.max_abs_diff(&id).unwrap() < KRAUS_TOLERANCE);
        }
    }
}
