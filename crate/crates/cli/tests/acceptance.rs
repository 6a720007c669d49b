//! Acceptance battery: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test -p unilab --test acceptance -- --nocapture`.

use std::sync::OnceLock;

use unilab::acceptance::{self, AcceptanceOutcome};
use unilab_core::ExperimentRecord;

fn full_model() -> &'static (ExperimentRecord, f64) {
    static RUN: OnceLock<(ExperimentRecord, f64)> = OnceLock::new();
    RUN.get_or_init(|| acceptance::full_model_run().expect("full model run"))
}

fn check(o: AcceptanceOutcome) {
    println!("{o}");
    assert!(o.passed, "{o}");
}

#[test]
fn criterion_1_oracle_equivalence() {
    check(acceptance::oracle_equivalence().unwrap());
}

#[test]
fn criterion_2_conservation() {
    let (record, secs) = full_model();
    check(acceptance::conservation(record, *secs));
}

#[test]
fn criterion_3_isolation_bifurcation() {
    check(acceptance::isolation_bifurcation().unwrap());
}

#[test]
fn criterion_4_superposition_oscillation() {
    check(acceptance::superposition_oscillation().unwrap());
}

#[test]
fn criterion_5_decoherence_without_definiteness() {
    check(acceptance::decoherence_without_definiteness().unwrap());
}

#[test]
fn criterion_6_emergent_classicality() {
    let (record, _) = full_model();
    check(acceptance::emergent_classicality(record));
}

#[test]
fn criterion_7_property_suites() {
    check(acceptance::property_suites().unwrap());
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    check(acceptance::determinism(dir.path()).unwrap());
}
