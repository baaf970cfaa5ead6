//! Acceptance suite: every shipped verification criterion, one test per
//! row, driven by the same configs the `acceptance` subcommand consumes.
//! Each test prints its pass/fail line; run with `--nocapture` to see the
//! table under `cargo test`.

use std::path::{Path, PathBuf};

use policy_fusion_cli::acceptance::{parse_check, render_row, run_check};

fn acceptance_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../acceptance")
}

fn run_criterion(file: &str) {
    let path = acceptance_dir().join(file);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {path:?}: {e}"));
    let check = parse_check(&text).expect("acceptance config parses");
    let result = run_check(&check);
    println!("{}", render_row(&result));
    assert!(result.passed, "{} failed: {}", result.name, result.detail);
}

#[test]
fn criterion_1_corollary_dominance() {
    run_criterion("01_corollary_dominance.toml");
}

#[test]
fn criterion_2_claim_c3_distribution() {
    run_criterion("02_claim_c3_distribution.toml");
}

#[test]
fn criterion_3_theorem1_domination() {
    run_criterion("03_theorem1_domination.toml");
}

#[test]
fn criterion_4_certificate_validity() {
    run_criterion("04_certificate_validity.toml");
}

#[test]
fn criterion_5_tau_f_soundness() {
    run_criterion("05_tau_f_soundness.toml");
}

#[test]
fn criterion_6_claim_c1_overshoot() {
    run_criterion("06_claim_c1_overshoot.toml");
}

#[test]
fn criterion_7_claim_c2_reaching_time() {
    run_criterion("07_claim_c2_reaching_time.toml");
}

#[test]
fn criterion_8_chain_fusion_benefit() {
    run_criterion("08_chain_fusion_benefit.toml");
}

#[test]
fn criterion_9_determinism() {
    run_criterion("09_determinism.toml");
}
