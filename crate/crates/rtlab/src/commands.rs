//! The `metrics`, `scenario`, and `scan` commands. The audit lives in
//! [`crate::audit`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rtlab_core::metrics::{self, RobustnessKind};
use rtlab_core::relations::noise_response_line;
use rtlab_core::{build_scenario, run_scenario, Error, NamedChannel};

use crate::config::{load_json, PovmConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::Report;

/// `rtlab metrics --config <path> [--out <path>]`: the metric table for a
/// config-defined task. Clean rows always; corrupted-instance and
/// prediction-change rows when a perturbation is given (prediction-change
/// loss additionally needs a deterministic classifier); error-region rows
/// when a ground-truth oracle is given as well.
pub fn cmd_metrics(
    config_path: &Path,
    out: Option<&Path>,
    normalize: bool,
    tolerance: f64,
) -> CliResult<()> {
    let cfg: RunConfig = load_json(config_path)?;
    let task = cfg.into_task()?;
    let compute = |e: Error| CliError::compute("computing metrics", e);

    let mut report = Report::new("metrics", None, tolerance);
    let h = &task.classifier;
    let e = &task.ensemble;

    report.push_metric(&metrics::accuracy(h, e).map_err(compute)?);
    if let Some(p) = &task.perturbation {
        report.push_metric(&metrics::robustness_accuracy(h, e, p).map_err(compute)?);
        report.push_metric(&metrics::prediction_change_robustness(h, e, p).map_err(compute)?);
        if let Some(oracle) = task.oracle.as_deref() {
            report.push_metric(
                &metrics::error_region_robustness_accuracy(h, e, p, oracle).map_err(compute)?,
            );
        }
    }
    report.push_metric(&metrics::empirical_loss(h, e, task.loss).map_err(compute)?);
    if let Some(p) = &task.perturbation {
        report.push_metric(
            &metrics::robust_loss(h, e, p, RobustnessKind::CorruptedInstance, task.loss, None)
                .map_err(compute)?,
        );
        // Prediction-change loss scores corrupted states against the clean
        // predictions, so it only exists when predictions are definite labels.
        if matches!(h, rtlab_core::Classifier::Score(_)) {
            report.push_metric(
                &metrics::robust_loss(h, e, p, RobustnessKind::PredictionChange, task.loss, None)
                    .map_err(compute)?,
            );
        }
        if let Some(oracle) = task.oracle.as_deref() {
            report.push_metric(
                &metrics::robust_loss(
                    h,
                    e,
                    p,
                    RobustnessKind::ErrorRegion,
                    task.loss,
                    Some(oracle),
                )
                .map_err(compute)?,
            );
        }
    }

    report.write(out, normalize)?;
    if let Some(path) = out {
        println!("metrics: {} rows -> {}", report.metrics.len(), path.display());
    }
    Ok(())
}

/// Parse repeated `--param key=value` arguments.
pub fn parse_scenario_params(raw: &[String]) -> CliResult<BTreeMap<String, f64>> {
    let mut params = BTreeMap::new();
    for arg in raw {
        let (key, value) = arg.split_once('=').ok_or_else(|| {
            CliError::config("--param", format!("`{arg}` is not of the form key=value"))
        })?;
        if key.is_empty() {
            return Err(CliError::config("--param", format!("`{arg}` has an empty key")));
        }
        let value: f64 = value.parse().map_err(|e| {
            CliError::config("--param", format!("`{arg}`: value does not parse as a number ({e})"))
        })?;
        if params.insert(key.to_string(), value).is_some() {
            return Err(CliError::config("--param", format!("`{key}` given twice")));
        }
    }
    Ok(params)
}

/// `rtlab scenario --id <1..12> [--param k=v]... --seed <u64> [--out <path>]`.
/// Returns whether every assertion passed; the report is written either way.
pub fn cmd_scenario(
    id: u32,
    raw_params: &[String],
    seed: u64,
    out: Option<&Path>,
    normalize: bool,
    tolerance: f64,
) -> CliResult<bool> {
    let params = parse_scenario_params(raw_params)?;
    let scenario =
        build_scenario(id, &params, seed).map_err(|e| CliError::config("scenario", e))?;
    let outcome = run_scenario(&scenario).map_err(|e| CliError::compute("scenario", e))?;

    let mut report = Report::new("scenario", Some(seed), tolerance);
    report.notes.push(format!("scenario {}: {}", outcome.id, outcome.label));
    for (key, value) in &outcome.metrics {
        report.push_metric_row(key, *value);
    }
    for relation in &outcome.reports {
        report.push_relation(relation, None);
    }
    for assertion in &outcome.assertions {
        report.push_assertion(assertion);
    }
    report.notes.extend(outcome.notes.iter().cloned());
    let all_passed = outcome.all_passed();
    report.all_passed = Some(all_passed);

    report.write(out, normalize)?;
    if let Some(path) = out {
        let total = outcome.assertions.len();
        println!(
            "scenario {} ({}): {}/{} assertions passed -> {}",
            outcome.id,
            outcome.label,
            total - outcome.failure_count(),
            total,
            path.display()
        );
    }
    Ok(all_passed)
}

/// Exit code for a finished scenario run.
pub fn scenario_exit_code(all_passed: bool) -> u8 {
    if all_passed {
        0
    } else {
        crate::error::EXIT_ASSERTION
    }
}

/// Parse `start:end:step` into the inclusive grid it denotes.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::config(
            "--grid",
            format!("`{spec}` is not of the form start:end:step"),
        ));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|e| {
                CliError::config("--grid", format!("`{s}` does not parse as a number ({e})"))
            })
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !start.is_finite() || !end.is_finite() || !step.is_finite() {
        return Err(CliError::config("--grid", "grid endpoints and step must be finite"));
    }
    if step <= 0.0 {
        return Err(CliError::config("--grid", format!("step must be positive, got {step}")));
    }
    if end < start {
        return Err(CliError::config(
            "--grid",
            format!("empty grid: end {end} is below start {start}"),
        ));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + step * k as f64).collect())
}

fn named_family(noise: &str, p: f64) -> CliResult<NamedChannel> {
    match noise {
        "bit_flip" => Ok(NamedChannel::BitFlip { p }),
        "phase_flip" => Ok(NamedChannel::PhaseFlip { p }),
        "depolarizing" => Ok(NamedChannel::Depolarizing { p }),
        other => Err(CliError::config(
            "--noise",
            format!("unknown family `{other}` (supported: bit_flip, phase_flip, depolarizing)"),
        )),
    }
}

/// `rtlab scan --noise <family> --grid <a:b:step> --config <povm.json>
/// [--out <path>]`: sweep the family parameter, fit the corrupted-vs-clean
/// accuracy line at each grid point, and emit one CSV row per point in grid
/// order.
pub fn cmd_scan(noise: &str, grid: &str, povm_path: &Path, out: Option<&Path>) -> CliResult<()> {
    let values = parse_grid(grid)?;
    for &p in &values {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::config(
                "--grid",
                format!("value {p} outside [0, 1] for the `{noise}` family"),
            ));
        }
    }
    let povm = load_json::<PovmConfig>(povm_path)?.into_classifier()?;

    let mut csv = String::from("param,slope,intercept,tradeoff_flag\n");
    for &p in &values {
        let family = named_family(noise, p)?;
        let line = noise_response_line(&family, &povm).map_err(|e| match e {
            Error::InvalidPovm(_) | Error::InvalidParameter(_) => {
                CliError::config("scan", e)
            }
            other => CliError::compute("scan", other),
        })?;
        csv.push_str(&format!("{p},{},{},{}\n", line.slope, line.intercept, line.tradeoff()));
    }

    match out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(csv.as_bytes())
                .map_err(|e| CliError::compute("writing scan rows to stdout", e))?;
        }
        Some(path) => {
            fs::write(path, csv)
                .map_err(|e| CliError::compute(&format!("writing `{}`", path.display()), e))?;
            println!("scan: {} rows -> {}", values.len(), path.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing_covers_the_contract() {
        let grid = parse_grid("0:1:0.25").unwrap();
        assert_eq!(grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0.3:0.3:0.1").unwrap(), vec![0.3]);
        for bad in ["1:0:0.25", "0:1:0", "0:1:-0.1", "a:b:c", "0:1", "0:1:0.25:9"] {
            let err = parse_grid(bad).unwrap_err();
            assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG, "{bad}");
        }
    }

    #[test]
    fn scenario_params_are_validated() {
        let params =
            parse_scenario_params(&["p=0.4".into(), "eta=1".into()]).unwrap();
        assert_eq!(params["p"], 0.4);
        assert_eq!(params["eta"], 1.0);
        for bad in [vec!["p".to_string()], vec!["=1".to_string()], vec!["p=x".to_string()]] {
            assert!(parse_scenario_params(&bad).is_err(), "{bad:?}");
        }
        let dup = parse_scenario_params(&["p=1".into(), "p=2".into()]).unwrap_err();
        assert!(dup.to_string().contains("twice"));
    }

    #[test]
    fn failed_assertions_map_to_exit_three() {
        assert_eq!(scenario_exit_code(true), 0);
        assert_eq!(scenario_exit_code(false), 3);
    }
}
