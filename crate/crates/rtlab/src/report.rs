//! Report artifact: one JSON document per command run, with a flat CSV view
//! of the metrics table.
//!
//! Reports are deterministic given the same inputs and seed; the only
//! volatile field is the wall-clock `timestamp`, which `--normalize` pins to
//! zero so byte-identical runs can be compared directly. Non-finite numbers
//! serialize as JSON `null` (and as `NaN` in the CSV view).

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use rtlab_core::metrics::{Method, MetricValue};
use rtlab_core::scenarios::{Assertion, AssertionBasis};
use rtlab_core::RelationReport;

use crate::error::{CliError, CliResult};

/// One metric entry. Scenario metrics carry only `key`/`value`; metric-table
/// entries also record the standard error (when sampled) and the method.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub key: String,
    pub value: f64,
    pub standard_error: Option<f64>,
    pub method: Option<String>,
}

/// One assumption behind a relation check.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// One closed-form-vs-oracle comparison, with the printed constant when the
/// literature states one.
#[derive(Debug, Clone, Serialize)]
pub struct RelationRow {
    pub id: String,
    /// Canonical-instance tag (audit rows only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    pub closed_form: f64,
    pub oracle: f64,
    pub published: Option<f64>,
    pub discrepancy: f64,
    pub erratum_flag: bool,
    /// All assumptions hold and the closed form matches the oracle at the
    /// report tolerance.
    pub verified: bool,
    pub assumptions: Vec<AssumptionRow>,
}

/// One scenario assertion.
#[derive(Debug, Clone, Serialize)]
pub struct AssertionRow {
    pub name: String,
    pub passed: bool,
    pub expected: String,
    pub actual: String,
    pub basis: &'static str,
}

/// The full report artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; zero under `--normalize`.
    pub timestamp: u64,
    /// Equality tolerance used for the `verified` columns (the
    /// `RTLAB_TOLERANCE` override is recorded here).
    pub tolerance: f64,
    pub metrics: Vec<MetricRow>,
    pub relations: Vec<RelationRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<AssertionRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all_passed: Option<bool>,
}

fn method_string(m: &Method) -> String {
    match m {
        Method::ExactSum => "exact-sum".into(),
        Method::MonteCarlo { samples } => format!("monte-carlo(n={samples})"),
        Method::NumericSearch { restarts } => format!("numeric-search(restarts={restarts})"),
    }
}

fn basis_str(b: AssertionBasis) -> &'static str {
    match b {
        AssertionBasis::Identity => "identity",
        AssertionBasis::Oracle => "oracle",
        AssertionBasis::Published => "published",
        AssertionBasis::Statistical => "statistical",
    }
}

/// CSV cell for a float: plain shortest-round-trip decimal, `NaN` for
/// non-finite values, empty for absent ones.
fn csv_float(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_nan() => "NaN".into(),
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

impl Report {
    pub fn new(command: &str, seed: Option<u64>, tolerance: f64) -> Self {
        let timestamp =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Report {
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seed,
            timestamp,
            tolerance,
            metrics: Vec::new(),
            relations: Vec::new(),
            assertions: Vec::new(),
            notes: Vec::new(),
            all_passed: None,
        }
    }

    /// Append a metric-table value (exact or sampled).
    pub fn push_metric(&mut self, m: &MetricValue) {
        self.metrics.push(MetricRow {
            key: m.kind.key().into(),
            value: m.value,
            standard_error: m.standard_error,
            method: Some(method_string(&m.method)),
        });
    }

    /// Append a bare key/value row (scenario metrics).
    pub fn push_metric_row(&mut self, key: &str, value: f64) {
        self.metrics.push(MetricRow {
            key: key.into(),
            value,
            standard_error: None,
            method: None,
        });
    }

    /// Append a relation check; `instance` tags the canonical instance in
    /// audit reports.
    pub fn push_relation(&mut self, r: &RelationReport, instance: Option<&str>) {
        self.relations.push(RelationRow {
            id: r.relation_id.clone(),
            instance: instance.map(String::from),
            closed_form: r.closed_form_value,
            oracle: r.oracle_value,
            published: r.published_value,
            discrepancy: r.discrepancy,
            erratum_flag: r.erratum_flag,
            verified: r.verified(self.tolerance),
            assumptions: r
                .assumptions
                .iter()
                .map(|a| AssumptionRow {
                    name: a.name.clone(),
                    passed: a.passed,
                    detail: a.detail.clone(),
                })
                .collect(),
        });
    }

    pub fn push_assertion(&mut self, a: &Assertion) {
        self.assertions.push(AssertionRow {
            name: a.name.clone(),
            passed: a.passed,
            expected: a.expected.clone(),
            actual: a.actual.clone(),
            basis: basis_str(a.basis),
        });
    }

    /// Pretty JSON with a trailing newline; `normalize` zeroes the timestamp.
    pub fn render_json(&self, normalize: bool) -> String {
        let mut copy = self.clone();
        if normalize {
            copy.timestamp = 0;
        }
        let mut text = serde_json::to_string_pretty(&copy).expect("report serializes");
        text.push('\n');
        text
    }

    /// Flat CSV: the metrics table when present, otherwise (audit reports)
    /// the relations table.
    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        if !self.metrics.is_empty() || self.relations.is_empty() {
            out.push_str("key,value,standard_error,method\n");
            for m in &self.metrics {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    m.key,
                    csv_float(Some(m.value)),
                    csv_float(m.standard_error),
                    m.method.as_deref().unwrap_or("")
                ));
            }
        } else {
            out.push_str("id,instance,closed_form,oracle,published,discrepancy,erratum_flag,verified\n");
            for r in &self.relations {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.id,
                    r.instance.as_deref().unwrap_or(""),
                    csv_float(Some(r.closed_form)),
                    csv_float(Some(r.oracle)),
                    csv_float(r.published),
                    csv_float(Some(r.discrepancy)),
                    r.erratum_flag,
                    r.verified
                ));
            }
        }
        out
    }

    /// Write the artifact: JSON to stdout when `out` is absent, otherwise to
    /// the file (CSV when the extension is `csv`, JSON otherwise).
    pub fn write(&self, out: Option<&Path>, normalize: bool) -> CliResult<()> {
        match out {
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(self.render_json(normalize).as_bytes())
                    .map_err(|e| CliError::compute("writing report to stdout", e))?;
                Ok(())
            }
            Some(path) => {
                let text = if path.extension().is_some_and(|e| e == "csv") {
                    self.render_csv()
                } else {
                    self.render_json(normalize)
                };
                fs::write(path, text)
                    .map_err(|e| CliError::compute(&format!("writing `{}`", path.display()), e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rtlab_core::relations::AssumptionCheck;

    #[test]
    fn normalize_zeroes_only_the_timestamp() {
        let mut report = Report::new("audit", None, 1e-12);
        report.push_metric_row("A", 0.25);
        let normalized = report.render_json(true);
        assert!(normalized.contains("\"timestamp\": 0"));
        // The raw rendering keeps whatever wall-clock value was sampled.
        let raw = report.render_json(false);
        assert_eq!(
            raw.replace(&format!("\"timestamp\": {}", report.timestamp), "\"timestamp\": 0"),
            normalized
        );
    }

    #[test]
    fn csv_falls_back_to_the_relations_table_for_auditlike_reports() {
        let mut report = Report::new("audit", None, 1e-12);
        report.push_relation(
            &RelationReport::new(
                "demo-relation",
                1.0,
                1.0,
                Some(2.0),
                vec![AssumptionCheck::new("demo", true, "ok".into())],
            ),
            Some("pinned"),
        );
        let csv = report.render_csv();
        assert!(csv.starts_with("id,instance,closed_form"));
        assert!(csv.contains("demo-relation,pinned,1,1,2,0,true,true"));

        report.push_metric_row("A", f64::NAN);
        let csv = report.render_csv();
        assert!(csv.starts_with("key,value"));
        assert!(csv.contains("A,NaN,,"));
    }
}
