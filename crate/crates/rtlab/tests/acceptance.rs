//! Acceptance gate for the command-line layer: the report pipeline must be
//! fully deterministic. Each scenario id is run twice with the same seed and
//! `--normalize`; the two reports must agree byte for byte. Prints a single
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).

use std::process::Command;

fn report(num: &str, what: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("criterion {num} [{verdict}] {what} — {detail}");
    assert!(passed, "criterion {num} failed: {detail}");
}

fn run_scenario(id: u32, seed: u64) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_rtlab"))
        .args([
            "--normalize",
            "scenario",
            "--id",
            &id.to_string(),
            "--seed",
            &seed.to_string(),
        ])
        .output()
        .expect("failed to launch the rtlab binary");
    (out.status.success(), out.stdout)
}

#[test]
fn criterion_13_scenario_reports_are_deterministic() {
    let mut mismatches = Vec::new();
    for id in 1..=12u32 {
        let seed = 1_000 + u64::from(id);
        let (ok_a, first) = run_scenario(id, seed);
        let (ok_b, second) = run_scenario(id, seed);
        if !(ok_a && ok_b) {
            mismatches.push(format!("id {id}: nonzero exit"));
        } else if first != second {
            mismatches.push(format!("id {id}: reports differ"));
        } else if first.is_empty() {
            mismatches.push(format!("id {id}: empty report"));
        }
    }
    report(
        "13",
        "normalized scenario reports are byte-identical across reruns",
        mismatches.is_empty(),
        &if mismatches.is_empty() {
            "ids 1-12, fixed seeds, two runs each".to_string()
        } else {
            mismatches.join("; ")
        },
    );
}
