//! `rtlab audit`: re-derive every checked relation on a pinned canonical
//! instance and tabulate closed form, oracle, and printed constant side by
//! side.
//!
//! The audit is informational and always exits 0: rows whose printed constant
//! disagrees with the oracle carry an erratum flag, and one row demonstrates
//! — on purpose — that the corrupted-accuracy identity fails off the
//! cycle-aligned family for three or more classes. Every instance below is a
//! pinned constant, so audit reports are byte-identical across runs.

use std::collections::BTreeMap;
use std::path::Path;

use rtlab_core::channels::pauli_z;
use rtlab_core::classifiers::standard_normal_cdf;
use rtlab_core::relations::{
    aggregate_shift_identity_check, biased_corrupted_accuracy_check,
    corrupted_accuracy_identity_check, incompatibility_check, noise_response_line,
    robust_split_decomposition, AssumptionCheck, JointLabelModel, RelationReport, ResponseLine,
};
use rtlab_core::{
    build_scenario, fidelity, run_scenario, trace_distance, DensityMatrix, Error, Label,
    LabeledEnsemble, NamedChannel, Perturbation, ScoreClassifier, ScoreFn, WeightedState,
};

use crate::config::z_basis_povm;
use crate::error::{CliError, CliResult};
use crate::report::Report;

fn internal(e: Error) -> CliError {
    CliError::compute("audit", e)
}

/// Joint table `p(t, c, c~) = clean(c|t)/K * noise(c~|c)` — uniform data
/// marginal and conditionally independent corruption by construction.
fn product_table(clean: &[&[f64]], noise: &[&[f64]]) -> CliResult<JointLabelModel> {
    let k = clean.len();
    let mut p = vec![0.0; k * k * k];
    for t in 0..k {
        for c in 0..k {
            for ct in 0..k {
                p[(t * k + c) * k + ct] = clean[t][c] / k as f64 * noise[c][ct];
            }
        }
    }
    JointLabelModel::new(k, p).map_err(internal)
}

/// Generic two-class table: doubly stochastic confusion, generic corruption.
fn pinned_table_k2() -> CliResult<JointLabelModel> {
    product_table(
        &[&[0.8, 0.2], &[0.2, 0.8]],
        &[&[0.8, 0.2], &[0.35, 0.65]],
    )
}

/// Three-class table from the cycle-aligned family (clean mass on the
/// diagonal and one shifted diagonal; corruption mixes the identity with the
/// same cycle) — the structure under which the identity extends past K = 2.
fn aligned_table_k3() -> CliResult<JointLabelModel> {
    product_table(
        &[&[0.65, 0.0, 0.35], &[0.35, 0.65, 0.0], &[0.0, 0.35, 0.65]],
        &[&[0.3, 0.7, 0.0], &[0.0, 0.3, 0.7], &[0.7, 0.0, 0.3]],
    )
}

/// Three-class table that satisfies every stated assumption (uniform
/// marginals, conditional independence) but is not cycle-aligned; the
/// identity genuinely fails on it.
fn generic_table_k3() -> CliResult<JointLabelModel> {
    product_table(
        &[&[0.7, 0.2, 0.1], &[0.1, 0.7, 0.2], &[0.2, 0.1, 0.7]],
        &[&[0.6, 0.3, 0.1], &[0.2, 0.5, 0.3], &[0.3, 0.3, 0.4]],
    )
}

/// Single-class-biased three-class table with `P(C = 1) = 1/2` (first class;
/// the remaining classes share the rest equally). Like the unbiased case,
/// the identity only extends past two classes on the cycle-aligned family:
/// clean mass sits on the diagonal and the inverse-shifted diagonal, with
/// the diagonal offsets telescoped along the cycle `0 -> 1 -> 2 -> 0` so the
/// model marginal hits (1/2, 1/4, 1/4) while the data marginal stays
/// uniform; the corruption mixes the identity with the same cycle.
fn biased_table_k3() -> CliResult<JointLabelModel> {
    let q = [
        [0.3, 0.0, 1.0 / 30.0],
        [0.2, 2.0 / 15.0, 0.0],
        [0.0, 7.0 / 60.0, 13.0 / 60.0],
    ];
    let n = [[0.3, 0.7, 0.0], [0.0, 0.3, 0.7], [0.7, 0.0, 0.3]];
    let mut p = vec![0.0; 27];
    for t in 0..3 {
        for c in 0..3 {
            for ct in 0..3 {
                p[(t * 3 + c) * 3 + ct] = q[t][c] * n[c][ct];
            }
        }
    }
    JointLabelModel::new(3, p).map_err(internal)
}

/// Push the slope and intercept of a fitted response line as two relation
/// rows (closed form vs fit, with the published constants when they exist).
fn push_response_rows(report: &mut Report, family: &str, instance: &str, line: &ResponseLine) {
    let note = AssumptionCheck::new(
        "tradeoff",
        true,
        format!("slope {} => tradeoff_flag {}", line.slope, line.tradeoff()),
    );
    report.push_relation(
        &RelationReport::new(
            &format!("{family}-response-slope"),
            line.closed_form_slope,
            line.slope,
            line.published_slope,
            vec![note],
        ),
        Some(instance),
    );
    report.push_relation(
        &RelationReport::new(
            &format!("{family}-response-intercept"),
            line.closed_form_intercept,
            line.intercept,
            line.published_intercept,
            vec![],
        ),
        Some(instance),
    );
}

/// Standard normal CDF by Simpson quadrature on the density — an oracle for
/// the closed form that shares no code with `standard_normal_cdf`.
fn normal_cdf_by_quadrature(x: f64) -> f64 {
    let a = -12.0; // density mass below -12 is ~1e-33
    let n = 20_000usize; // even
    let h = (x - a) / n as f64;
    let density =
        |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = density(a) + density(x);
    for k in 1..n {
        sum += density(a + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn diag_state(entries: &[f64]) -> CliResult<DensityMatrix> {
    DensityMatrix::from_diagonal(entries).map_err(internal)
}

fn bloch_state(theta: f64, phi: f64) -> CliResult<DensityMatrix> {
    DensityMatrix::bloch(theta, phi).map_err(internal)
}

/// Pinned state pairs across dimensions 2..4 for the trace-distance/fidelity
/// bound row. Each pair has at least one strictly mixed member, so the bound
/// holds with real slack; pure/pure pairs attain it with equality and would
/// only measure eigensolver noise here.
fn distance_fidelity_row() -> CliResult<RelationReport> {
    let pairs = vec![
        (bloch_state(0.3, 0.1)?, diag_state(&[0.2, 0.8])?),
        (diag_state(&[0.8, 0.2])?, diag_state(&[0.3, 0.7])?),
        (bloch_state(1.2, 2.2)?, diag_state(&[0.5, 0.5])?),
        (diag_state(&[0.5, 0.3, 0.2])?, DensityMatrix::maximally_mixed(3).map_err(internal)?),
        (diag_state(&[0.4, 0.3, 0.2, 0.1])?, diag_state(&[0.1, 0.2, 0.3, 0.4])?),
        (
            DensityMatrix::mix(&[(0.5, &bloch_state(1.2, 2.2)?), (0.5, &bloch_state(0.1, 0.5)?)])
                .map_err(internal)?,
            bloch_state(1.2, 2.2)?,
        ),
    ];
    let mut max_violation: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    for (a, b) in &pairs {
        let tau = trace_distance(a, b).map_err(internal)?;
        let bound = (1.0 - fidelity(a, b).map_err(internal)?).max(0.0).sqrt();
        max_violation = max_violation.max(tau - bound);
        min_slack = min_slack.min(bound - tau);
    }
    let holds = max_violation <= 1e-12;
    Ok(RelationReport::new(
        "distance-fidelity-bound",
        max_violation.max(0.0),
        0.0,
        None,
        vec![AssumptionCheck::new(
            "bound-holds",
            holds,
            format!(
                "tau <= sqrt(1 - F) on {} pinned pairs; max violation {:.3e}, min slack {:.3e}",
                pairs.len(),
                max_violation,
                min_slack
            ),
        )],
    ))
}

/// The printed Gaussian accuracy reads `1 - Erf(eta sqrt(d))`; under the
/// standard erf that value is ~0.0047 at `eta sqrt(d) = 2`, while the
/// achieved accuracy is `Phi(2)`. The row pins the convention mismatch: the
/// closed form is `Phi`, the oracle is an independent quadrature, and the
/// published value is the standard-erf reading (the tail-convention reading
/// `1 - Q` agrees with the oracle, recorded as an assumption).
fn erf_convention_row() -> RelationReport {
    let eta_sqrt_d = 2.0;
    let closed = standard_normal_cdf(eta_sqrt_d);
    let oracle = normal_cdf_by_quadrature(eta_sqrt_d);
    let standard_erf_reading = 2.0 * standard_normal_cdf(-eta_sqrt_d * std::f64::consts::SQRT_2);
    let tail_reading = 1.0 - (1.0 - standard_normal_cdf(eta_sqrt_d));
    RelationReport::new(
        "gaussian-accuracy-erf-convention",
        closed,
        oracle,
        Some(standard_erf_reading),
        vec![AssumptionCheck::new(
            "tail-convention-agrees",
            (tail_reading - oracle).abs() <= 1e-9,
            format!(
                "reading the printed form with the Gaussian tail Q gives {tail_reading}, \
                 matching the oracle; the standard-erf reading gives {standard_erf_reading}"
            ),
        )],
    )
}

/// Linear-loss shift split into robust/flipped parts on an ensemble with
/// non-uniform weights: the weight-form prefactor closes the identity, the
/// printed count-ratio prefactor does not.
fn robust_split_row() -> CliResult<RelationReport> {
    let ensemble = LabeledEnsemble::new(
        vec![
            WeightedState { weight: 0.7, state: diag_state(&[0.9, 0.1])?, label: Label::PLUS },
            WeightedState { weight: 0.3, state: diag_state(&[0.25, 0.75])?, label: Label::MINUS },
        ],
        2,
    )
    .map_err(internal)?;
    let h = ScoreClassifier::sign_threshold(ScoreFn::LinearObservable(pauli_z()), 0.0);
    let p = Perturbation::Channel(NamedChannel::BitFlip { p: 1.0 }.build().map_err(internal)?);
    let split = robust_split_decomposition(&h, &ensemble, &p).map_err(internal)?;

    let half_shift = 0.5 * (split.clean_loss - split.corrupted_loss);
    let weight_form = split.flipped_weight * split.flipped_part_loss;
    let count_form = half_shift - split.published_identity_residual;
    Ok(RelationReport::new(
        "robust-split-identity",
        weight_form,
        half_shift,
        Some(count_form),
        vec![
            AssumptionCheck::new(
                "all-items-flipped",
                split.violators.is_empty() && split.robust_indices.is_empty(),
                format!(
                    "{} flipped, {} robust, {} violators under full bit flip",
                    split.flipped_indices.len(),
                    split.robust_indices.len(),
                    split.violators.len()
                ),
            ),
            AssumptionCheck::new(
                "weights-nonuniform",
                true,
                "item weights 0.7/0.3; the count-ratio prefactor is only exact for uniform \
                 weights"
                    .into(),
            ),
        ],
    ))
}

/// `rtlab audit [--out <path>]`: every relation checker on its canonical
/// instance. Always exits 0; flags and failed assumptions live in the rows.
pub fn cmd_audit(out: Option<&Path>, normalize: bool, tolerance: f64) -> CliResult<()> {
    let mut report = Report::new("audit", None, tolerance);
    report.notes.push(
        "canonical instances are pinned constants; erratum flags mark printed values that \
         disagree with the oracle while the closed form matches it"
            .into(),
    );
    report.notes.push(
        "the generic-table-k3 row is an intentional counterexample: off the cycle-aligned \
         family the corrupted-accuracy identity fails for three classes"
            .into(),
    );

    // Corrupted-accuracy identity: generic two-class table, the aligned
    // three-class family, and the counterexample off that family.
    report.push_relation(&corrupted_accuracy_identity_check(&pinned_table_k2()?), Some("pinned-table-k2"));
    report.push_relation(
        &corrupted_accuracy_identity_check(&aligned_table_k3()?),
        Some("cycle-aligned-table-k3"),
    );
    report.push_relation(
        &corrupted_accuracy_identity_check(&generic_table_k3()?),
        Some("generic-table-k3"),
    );

    // Biased variant; the printed sign of the correction term is the flagged
    // part.
    report.push_relation(
        &biased_corrupted_accuracy_check(&biased_table_k3()?, 0, 0.5),
        Some("pinned-biased-table-k3-alpha-0.5"),
    );

    // Response lines under the computational-basis projector.
    let povm = z_basis_povm();
    let dep = noise_response_line(&NamedChannel::Depolarizing { p: 0.5 }, &povm).map_err(internal)?;
    push_response_rows(&mut report, "depolarizing", "p-0.5-z-projector", &dep);
    let pauli = noise_response_line(
        &NamedChannel::Pauli { p: [0.7, 0.1, 0.1, 0.1] },
        &povm,
    )
    .map_err(internal)?;
    push_response_rows(&mut report, "pauli", "p-(0.7,0.1,0.1,0.1)-z-projector", &pauli);
    let bitflip = noise_response_line(&NamedChannel::BitFlip { p: 0.75 }, &povm).map_err(internal)?;
    push_response_rows(&mut report, "bitflip", "p-0.75-z-projector", &bitflip);

    // Response-line incompatibility: the depolarizing/bit-flip pair whose
    // printed derivative disagrees with both derivation routes.
    let incompat = incompatibility_check(
        &NamedChannel::Depolarizing { p: 0.5 },
        &NamedChannel::BitFlip { p: 0.75 },
        &povm,
    )
    .map_err(internal)?;
    report.push_relation(
        &RelationReport::new(
            "channel-incompatibility-derivative",
            incompat.second.closed_form_slope / incompat.first.closed_form_slope,
            incompat.derivative,
            incompat.published_derivative,
            vec![AssumptionCheck::new(
                "incompatible",
                incompat.incompatible,
                format!("derivative {} < 0", incompat.derivative),
            )],
        ),
        Some("depolarizing-0.5-vs-bitflip-0.75"),
    );

    // Reference-ensemble loss rows (clean, corrupted, and the shift
    // identity); both printed loss constants are flagged.
    let reference = build_scenario(9, &BTreeMap::new(), 9).map_err(internal)?;
    let outcome = run_scenario(&reference).map_err(internal)?;
    for relation in &outcome.reports {
        report.push_relation(relation, Some("reference-ensemble"));
    }

    // Aggregate form of the accuracy shift for a stochastic classifier.
    let pair = LabeledEnsemble::uniform(
        vec![(bloch_state(0.4, 0.3)?, Label::PLUS), (bloch_state(2.8, 1.1)?, Label::MINUS)],
        2,
    )
    .map_err(internal)?;
    let channel = NamedChannel::Depolarizing { p: 0.3 }.build().map_err(internal)?;
    report.push_relation(
        &aggregate_shift_identity_check(&pair, &povm, &channel).map_err(internal)?,
        Some("pinned-qubit-pair-depolarizing-0.3"),
    );

    // Inequalities and conventions.
    report.push_relation(&distance_fidelity_row()?, Some("pinned-state-pairs"));
    report.push_relation(&erf_convention_row(), Some("eta-sqrt-d-2"));
    report.push_relation(&robust_split_row()?, Some("nonuniform-weights-bitflip-1.0"));

    report.write(out, normalize)?;
    if let Some(path) = out {
        let flagged = report.relations.iter().filter(|r| r.erratum_flag).count();
        println!(
            "audit: {} rows, {} erratum flags -> {}",
            report.relations.len(),
            flagged,
            path.display()
        );
    }
    Ok(())
}
