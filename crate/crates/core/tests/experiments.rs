use unilab_core::experiments::{
    convergence_suite, run_full_model, seed_sweep, Protocol, ProtocolKind, GRID_REFINEMENT_TOLERANCE,
};
use unilab_core::hamiltonian::{PhysicalParams, QeAxis};

#[test]
fn convergence_suite_passes() {
    let report = convergence_suite(true).unwrap();
    assert!(report.krylov_vs_dense.fidelity > 1.0 - 1e-9);
    for e in &report.dt_study {
        assert!(e.vector_error <= e.error_budget, "{e:?}");
        assert!(e.fidelity_deficit < 1e-9);
    }
    let grid = report.grid_study.as_ref().unwrap();
    assert!(grid.difference < GRID_REFINEMENT_TOLERANCE, "{grid:?}");
    assert!(report.passed);
}

#[test]
fn full_model_reports_six_criteria_and_conserves_sigma_z_on_both_axes() {
    for axis in [QeAxis::Zx, QeAxis::Zz] {
        let mut p = Protocol::preset(ProtocolKind::FullModel);
        p.params.qe_axis = axis;
        let out = run_full_model(&p).unwrap();
        assert_eq!(out.criteria.len(), 6);
        assert!(out.record.sigma_z_drift() < 1e-10, "{axis}: {}", out.record.sigma_z_drift());
        let r = &out.record.final_report;
        assert!((r.p_left + r.p_right + r.doublet_residual - 1.0).abs() < 1e-9);
        assert!(out.record.redundancy.is_some());
    }
}

#[test]
fn seed_sweep_tallies_outcomes() {
    let mut p = Protocol::preset(ProtocolKind::Superposition);
    p.params = PhysicalParams::defaults(2);
    p.params.grid_points = 64;
    p.prop.t_final = 0.5;
    let sweep = seed_sweep(&p, 1..=3).unwrap();
    assert_eq!(sweep.len(), 3);
    assert!(sweep.iter().all(|e| e.outcome == "left" || e.outcome == "right"));
    assert_eq!(sweep.iter().map(|e| e.seed).collect::<Vec<_>>(), [1, 2, 3]);
}
