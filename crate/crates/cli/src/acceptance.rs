//! The eight acceptance criteria, shared by `unilab accept` and the
//! `acceptance` test target.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use unilab_core::experiments::{
    classicality_criteria, krylov_vs_dense, run_protocol, small_model, Protocol, ProtocolKind, ORACLE_FIDELITY_DEFICIT,
};
use unilab_core::observables::{trailing_mean, trailing_window, STABILITY_WINDOW};
use unilab_core::verification::{matrix_free_vs_dense, property_suite};
use unilab_core::{ExperimentRecord, Result, C64};

use crate::app::{execute_run, DISTRIBUTION_CSV, TIMESERIES_CSV};
use crate::config::parse_config_str;

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for AcceptanceOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn outcome(id: u8, name: &str, passed: bool, detail: String, start: Instant) -> AcceptanceOutcome {
    AcceptanceOutcome {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Matrix-free vs dense Kronecker assembly on 100 random vectors, and
/// Krylov vs exact propagation to t = 5, at N_E = 2, N_x = 16.
pub fn oracle_equivalence() -> Result<AcceptanceOutcome> {
    let start = Instant::now();
    let params = small_model(2, 16, 2.4);
    let apply_err = matrix_free_vs_dense(&params, 100, 2024)?;
    let cmp = krylov_vs_dense(&params, 5.0, 0.01)?;
    let secs = start.elapsed().as_secs_f64();
    let passed = apply_err < 1e-12 && cmp.fidelity > 1.0 - ORACLE_FIDELITY_DEFICIT && secs < 10.0;
    Ok(outcome(
        1,
        "oracle equivalence",
        passed,
        format!(
            "max |H_dense v - H v| = {apply_err:.2e} (< 1e-12), 1 - fidelity = {:.2e} (< 1e-9), runtime {secs:.1} s (< 10 s)",
            (1.0 - cmp.fidelity).max(0.0)
        ),
        start,
    ))
}

/// The shipped full-model run (N_E = 8, N_x = 128, t = 2).
pub fn full_model_run() -> Result<(ExperimentRecord, f64)> {
    let start = Instant::now();
    let record = run_protocol(&Protocol::preset(ProtocolKind::FullModel))?;
    Ok((record, start.elapsed().as_secs_f64()))
}

pub fn conservation(record: &ExperimentRecord, seconds: f64) -> AcceptanceOutcome {
    let start = Instant::now();
    let norm = record.norm_drift();
    let energy = record.relative_energy_drift();
    let sz = record.sigma_z_drift();
    let passed = norm < 1e-9 && energy < 1e-8 && sz < 1e-10 && seconds < 300.0;
    let mut o = outcome(
        2,
        "conservation",
        passed,
        format!(
            "norm drift {norm:.2e} (< 1e-9), relative energy drift {energy:.2e} (< 1e-8), sigma_z drift {sz:.2e} (< 1e-10), runtime {seconds:.1} s (< 300 s)"
        ),
        start,
    );
    o.seconds = seconds;
    o
}

pub fn isolation_bifurcation() -> Result<AcceptanceOutcome> {
    let start = Instant::now();
    let up = run_protocol(&Protocol::preset(ProtocolKind::Isolation))?;
    let mut down_proto = Protocol::preset(ProtocolKind::Isolation);
    down_proto.qubit_init = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let down = run_protocol(&down_proto)?;
    let x_up = trailing_mean(&up.times, &up.mean_x_series, STABILITY_WINDOW).unwrap_or(f64::NAN);
    let x_down = trailing_mean(&down.times, &down.mean_x_series, STABILITY_WINDOW).unwrap_or(f64::NAN);
    Ok(outcome(
        3,
        "isolation bifurcation",
        x_up < -0.5 && x_down > 0.5,
        format!("trailing <x> for |0> = {x_up:.4} (< -0.5), for |1> = {x_down:.4} (> 0.5)"),
        start,
    ))
}

pub fn superposition_oscillation() -> Result<AcceptanceOutcome> {
    let start = Instant::now();
    let rec = run_protocol(&Protocol::preset(ProtocolKind::Superposition))?;
    let half = trailing_mean(&rec.times, &rec.mean_x_series, 0.5).unwrap_or(f64::NAN);
    let peak = rec
        .p_left_series
        .iter()
        .chain(&rec.p_right_series)
        .copied()
        .fold(0.0, f64::max);
    Ok(outcome(
        4,
        "superposition oscillation",
        half.abs() < 0.25 && peak <= 0.8,
        format!(
            "|trailing-half mean <x>| = {:.4} (< 0.25), max single-well population = {peak:.4} (<= 0.8), final qubit purity {:.4}",
            half.abs(),
            rec.final_report.qubit_purity
        ),
        start,
    ))
}

pub fn decoherence_without_definiteness() -> Result<AcceptanceOutcome> {
    let start = Instant::now();
    let rec = run_protocol(&Protocol::preset(ProtocolKind::DecoherenceOnly))?;
    let purity = rec.final_report.qubit_purity;
    let w = trailing_window(&rec.times, STABILITY_WINDOW);
    let max_x = rec.mean_x_series[w].iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(outcome(
        5,
        "decoherence without definiteness",
        (purity - 0.5).abs() <= 0.05 && max_x < 0.5,
        format!("final qubit purity {purity:.4} (0.5 +- 0.05), max trailing |<x>| {max_x:.4} (< 0.5)"),
        start,
    ))
}

pub fn emergent_classicality(record: &ExperimentRecord) -> AcceptanceOutcome {
    let start = Instant::now();
    let criteria = classicality_criteria(record);
    let detail = criteria
        .iter()
        .map(|c| format!("{} {:.4} ({}) {}", c.name, c.value, c.requirement, if c.passed { "ok" } else { "MISS" }))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(6, "emergent classicality", criteria.iter().all(|c| c.passed), detail, start)
}

pub fn property_suites() -> Result<AcceptanceOutcome> {
    let start = Instant::now();
    let rep = property_suite(50, 20240607)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        7,
        "property suites",
        rep.passed() && secs < 60.0,
        format!(
            "{} bipartitions: Schmidt error {:.2e}, min I {:.2e}, monotonicity violation {:.2e}, purity bound violation {:.2e}, trace error {:.2e}, Hermitian error {:.2e}, min eigenvalue {:.2e}",
            rep.bipartitions,
            rep.schmidt_max_error,
            rep.min_mutual_information,
            rep.monotonicity_violation,
            rep.purity_bound_violation,
            rep.max_trace_error,
            rep.max_hermitian_error,
            rep.min_eigenvalue
        ),
        start,
    ))
}

/// Two `run` invocations with the same configuration and seed.
pub fn determinism(workdir: &Path) -> Result<AcceptanceOutcome> {
    let start = Instant::now();
    let mut identical = true;
    let mut names = Vec::new();
    let mut runs = Vec::new();
    for tag in ["a", "b"] {
        let mut cfg = parse_config_str("protocol = decoherence_only\nseed = 3\nemit_svg = false\n")?;
        cfg.output_dir = workdir.join(format!("determinism_{tag}"));
        runs.push(execute_run(&cfg, None)?);
    }
    for name in [TIMESERIES_CSV, DISTRIBUTION_CSV] {
        let read = |i: usize| std::fs::read(runs[i].manifest.with_file_name(name)).unwrap_or_default();
        let (a, b) = (read(0), read(1));
        identical &= !a.is_empty() && a == b;
        names.push(format!("{name} {} bytes", a.len()));
    }
    Ok(outcome(
        8,
        "determinism",
        identical,
        format!("byte-identical: {} ({})", identical, names.join(", ")),
        start,
    ))
}

/// Runs every criterion in order, reporting each as soon as it finishes.
pub fn run_battery(workdir: &Path, mut report: impl FnMut(&AcceptanceOutcome)) -> Result<Vec<AcceptanceOutcome>> {
    let mut out = Vec::with_capacity(8);
    let mut push = |o: AcceptanceOutcome, out: &mut Vec<AcceptanceOutcome>| {
        report(&o);
        out.push(o);
    };
    push(oracle_equivalence()?, &mut out);
    let (full, secs) = full_model_run()?;
    push(conservation(&full, secs), &mut out);
    push(isolation_bifurcation()?, &mut out);
    push(superposition_oscillation()?, &mut out);
    push(decoherence_without_definiteness()?, &mut out);
    push(emergent_classicality(&full), &mut out);
    push(property_suites()?, &mut out);
    push(determinism(workdir)?, &mut out);
    Ok(out)
}
