//! Protocol presets, initial-state preparation and experiment orchestration.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    build_total_hamiltonian, effective_potentials, observer_factor, observer_hamiltonian, GridSpec, HamiltonianSet,
    ParamRanges, PhysicalParams, TermMask, DEFAULT_PARAM_SEED, QUBIT_FACTOR,
};
use crate::observables::{
    observer_statistics, redundancy_scan, stability_metric, well_basis_from_hamiltonian, ClassicalityReport,
    RedundancyCurve, WellBasis, DEFAULT_FRAGMENT_SAMPLES, STABILITY_WINDOW,
};
use crate::propagator::{dense_reference_evolve, evolve_from, EvolutionStats, PropagatorConfig, Snapshot};
use crate::tensorspace::{kron_assemble, partial_trace, random_product_state, FactorSpec, SpaceLayout, StateVector, C64};

pub const CODE_VERSION: &str = concat!("unilab-core ", env!("CARGO_PKG_VERSION"));

/// Environment seed of the control protocols.
pub const DEFAULT_ENV_SEED: u64 = 1;

/// Environment seed of the full-model presets: the best-scoring seed of
/// the shipped parameter search.
pub const FULL_MODEL_ENV_SEED: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// `H_QE = H_EO = 0`: the observer reads a qubit basis state.
    Isolation,
    /// `H_QE = 0`: qubit superposition, no decoherence.
    Superposition,
    /// `H_EO = 0`: decoherence without observer–bath coupling.
    DecoherenceOnly,
    /// All couplings on, larger bath.
    FullModel,
    /// Full model with the single-spin redundancy tracked at every snapshot.
    Redundancy,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] = [
        ProtocolKind::Isolation,
        ProtocolKind::Superposition,
        ProtocolKind::DecoherenceOnly,
        ProtocolKind::FullModel,
        ProtocolKind::Redundancy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Isolation => "isolation",
            ProtocolKind::Superposition => "superposition",
            ProtocolKind::DecoherenceOnly => "decoherence_only",
            ProtocolKind::FullModel => "full_model",
            ProtocolKind::Redundancy => "redundancy",
        }
    }

    pub fn mask(self) -> TermMask {
        match self {
            ProtocolKind::Isolation => TermMask {
                qe: false,
                eo: false,
                ..TermMask::ALL
            },
            ProtocolKind::Superposition => TermMask {
                qe: false,
                ..TermMask::ALL
            },
            ProtocolKind::DecoherenceOnly => TermMask {
                eo: false,
                ..TermMask::ALL
            },
            ProtocolKind::FullModel | ProtocolKind::Redundancy => TermMask::ALL,
        }
    }

    pub fn default_n_env(self) -> usize {
        match self {
            ProtocolKind::FullModel | ProtocolKind::Redundancy => 8,
            _ => 4,
        }
    }

    pub fn default_t_final(self) -> f64 {
        match self {
            ProtocolKind::FullModel | ProtocolKind::Redundancy => 2.0,
            _ => 5.0,
        }
    }

    /// Snapshot stride (steps at dt = 0.01) so that the trailing quarter of
    /// every preset holds at least ten snapshots.
    pub fn default_record_stride(self) -> usize {
        match self {
            ProtocolKind::FullModel | ProtocolKind::Redundancy => 5,
            _ => 10,
        }
    }

    pub fn default_qubit_init(self) -> [C64; 2] {
        match self {
            ProtocolKind::Isolation => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            _ => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                [C64::new(s, 0.0), C64::new(s, 0.0)]
            }
        }
    }

    pub fn default_env_seed(self) -> u64 {
        match self {
            ProtocolKind::FullModel | ProtocolKind::Redundancy => FULL_MODEL_ENV_SEED,
            _ => DEFAULT_ENV_SEED,
        }
    }

    pub fn tracks_redundancy(self) -> bool {
        matches!(self, ProtocolKind::FullModel | ProtocolKind::Redundancy)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown protocol {s:?} (expected isolation, superposition, decoherence_only, full_model or redundancy)"
                ))
            })
    }
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub mask: TermMask,
    /// Qubit amplitudes `(α, β)` of `α|0⟩ + β|1⟩`.
    pub qubit_init: [C64; 2],
    pub env_seed: u64,
    pub params: PhysicalParams,
    pub prop: PropagatorConfig,
    pub fragment_samples: usize,
}

impl Protocol {
    pub fn preset(kind: ProtocolKind) -> Self {
        Self::preset_with(kind, kind.default_n_env(), &ParamRanges::default(), DEFAULT_PARAM_SEED)
    }

    pub fn preset_with(kind: ProtocolKind, n_env: usize, ranges: &ParamRanges, param_seed: u64) -> Self {
        Self {
            kind,
            mask: kind.mask(),
            qubit_init: kind.default_qubit_init(),
            env_seed: kind.default_env_seed(),
            params: PhysicalParams::with_ranges(n_env, ranges, param_seed),
            prop: PropagatorConfig {
                t_final: kind.default_t_final(),
                record_stride: kind.default_record_stride(),
                ..PropagatorConfig::default()
            },
            fragment_samples: DEFAULT_FRAGMENT_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.prop.validate()?;
        let norm = self.qubit_init[0].norm_sqr() + self.qubit_init[1].norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("|α|² + |β|² = {norm}, must be 1 within 1e-12")));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        self.params.layout()
    }

    /// Short hex digest over every input that influences the dynamics.
    pub fn parameter_hash(&self) -> String {
        let canonical = format!(
            "{:?}|{:?}|{:?}|{:?}|{}|{:?}|{}",
            self.kind, self.mask, self.qubit_init, self.params, self.env_seed, self.prop, self.fragment_samples
        );
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}

/// Width `σ = (2 m a)^{-1/4}` of the barrier-top Gaussian `exp(−x²/2σ²)`.
pub fn ready_state_width(params: &PhysicalParams) -> f64 {
    (2.0 * params.mass * params.a_well).powf(-0.25)
}

/// Normalized Gaussian "ready" state centred on the barrier top.
pub fn ready_state(params: &PhysicalParams) -> Result<Vec<C64>> {
    let sigma = ready_state_width(params);
    // |ψ|² ∝ exp(−x²/σ²): probability beyond ±L is erfc(L/σ).
    let lost = statrs::function::erf::erfc(params.grid_half_width / sigma);
    if lost > 1e-8 {
        return Err(Error::Config(format!(
            "ready state truncated by the grid walls (norm loss {lost:e} > 1e-8)"
        )));
    }
    let grid = params.grid();
    let mut amps: Vec<C64> = grid
        .nodes()
        .into_iter()
        .map(|x| C64::new((-x * x / (2.0 * sigma * sigma)).exp(), 0.0))
        .collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|z| *z /= norm);
    Ok(amps)
}

/// `(α|0⟩ + β|1⟩) ⊗ |E_0⟩ ⊗ |O_ready⟩` with a seeded Haar product bath.
pub fn prepare_initial_state(protocol: &Protocol, layout: Arc<SpaceLayout>) -> Result<StateVector> {
    protocol.validate()?;
    let n_env = protocol.params.n_env();
    if layout.num_factors() != n_env + 2 || layout.dim(observer_factor(n_env)) != protocol.params.grid_points {
        return Err(Error::Config("layout does not match protocol parameters".into()));
    }
    let mut specs = Vec::with_capacity(n_env + 2);
    specs.push(FactorSpec::Amplitudes(protocol.qubit_init.to_vec()));
    specs.extend(std::iter::repeat_n(FactorSpec::Haar, n_env));
    specs.push(FactorSpec::Amplitudes(ready_state(&protocol.params)?));
    random_product_state(layout, protocol.env_seed, &specs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub parameter_hash: String,
    pub env_seed: u64,
    pub code_version: String,
}

/// Time series and final diagnostics of one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub protocol: Protocol,
    pub times: Vec<f64>,
    pub qubit_purity_series: Vec<f64>,
    pub observer_purity_series: Vec<f64>,
    pub mean_x_series: Vec<f64>,
    pub p_left_series: Vec<f64>,
    pub p_right_series: Vec<f64>,
    pub sigma_z_series: Vec<f64>,
    pub energy_series: Vec<f64>,
    pub norm_series: Vec<f64>,
    /// Single-spin redundancy fraction per snapshot (redundancy protocol only).
    pub redundancy_series: Option<Vec<f64>>,
    pub final_report: ClassicalityReport,
    /// `(x_i, ρ_O(i, i))` at the final snapshot.
    pub final_distribution: Vec<(f64, f64)>,
    pub wells: WellBasis,
    pub grid: GridSpec,
    pub redundancy: Option<RedundancyCurve>,
    pub stats: EvolutionStats,
    pub provenance: Provenance,
}

impl ExperimentRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn stability(&self) -> Option<f64> {
        stability_metric(&self.times, &self.mean_x_series, STABILITY_WINDOW)
    }

    fn max_drift(series: &[f64]) -> f64 {
        let first = series.first().copied().unwrap_or(0.0);
        series.iter().map(|v| (v - first).abs()).fold(0.0, f64::max)
    }

    pub fn sigma_z_drift(&self) -> f64 {
        Self::max_drift(&self.sigma_z_series)
    }

    pub fn norm_drift(&self) -> f64 {
        Self::max_drift(&self.norm_series)
    }

    /// Largest `|E(t) − E(0)| / |E(0)|` over the snapshots.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energy_series.first().copied().unwrap_or(0.0);
        Self::max_drift(&self.energy_series) / e0.abs().max(f64::MIN_POSITIVE)
    }
}

struct SnapshotData {
    stats: crate::observables::ObserverStatistics,
    sigma_z: f64,
    energy: f64,
    norm: f64,
    redundancy: Option<f64>,
}

/// Where to pick up an interrupted run.
#[derive(Debug, Clone)]
pub struct ResumePoint {
    pub state: StateVector,
    pub step: usize,
}

/// Builds the masked Hamiltonian for a protocol.
pub fn protocol_hamiltonian(protocol: &Protocol) -> Result<HamiltonianSet> {
    let layout = Arc::new(protocol.layout()?);
    build_total_hamiltonian(&protocol.params, layout, protocol.mask)
}

pub fn protocol_wells(protocol: &Protocol) -> Result<WellBasis> {
    let h_o = observer_hamiltonian(&protocol.params)?;
    well_basis_from_hamiltonian(&h_o, &protocol.params.grid())
}

/// Runs a protocol, calling `on_snapshot` after each recorded snapshot.
/// Returns the record and the final global state.
pub fn run_protocol_with<F>(protocol: &Protocol, resume: Option<ResumePoint>, mut on_snapshot: F) -> Result<(ExperimentRecord, StateVector)>
where
    F: FnMut(&Snapshot<'_>) -> Result<()>,
{
    protocol.validate()?;
    let layout = Arc::new(protocol.layout()?);
    let ham = build_total_hamiltonian(&protocol.params, layout.clone(), protocol.mask)?;
    let grid = protocol.params.grid();
    let wells = protocol_wells(protocol)?;
    let (initial, start) = match resume {
        Some(r) => {
            if r.state.layout().as_ref() != layout.as_ref() {
                return Err(Error::Config("resume state layout does not match protocol".into()));
            }
            (r.state, r.step)
        }
        None => (prepare_initial_state(protocol, layout.clone())?, 0),
    };
    let track_redundancy = protocol.kind == ProtocolKind::Redundancy;

    let traj = evolve_from(initial, start, ham.operator(), &protocol.prop, |snap| {
        let stats = observer_statistics(snap.state, &grid, &wells)?;
        let rho_q = partial_trace(snap.state, &[QUBIT_FACTOR])?;
        let sigma_z = (rho_q.matrix()[(0, 0)] - rho_q.matrix()[(1, 1)]).re;
        let redundancy = if track_redundancy {
            Some(redundancy_scan(snap.state, &[], 1, protocol.env_seed)?.single_spin_fraction)
        } else {
            None
        };
        let data = SnapshotData {
            stats,
            sigma_z,
            energy: ham.energy(snap.state),
            norm: snap.state.norm(),
            redundancy,
        };
        on_snapshot(snap)?;
        Ok(data)
    })?;

    let last = traj.samples.last().expect("evolution records at least one snapshot");
    let mut final_report = last.stats.report.clone();
    let redundancy = if protocol.kind.tracks_redundancy() {
        let sizes: Vec<usize> = (1..=protocol.params.n_env()).collect();
        let curve = redundancy_scan(&traj.final_state, &sizes, protocol.fragment_samples, protocol.env_seed)?;
        final_report.redundancy = Some(curve.single_spin_fraction);
        Some(curve)
    } else {
        None
    };
    let final_distribution = last
        .stats
        .distribution
        .iter()
        .enumerate()
        .map(|(i, p)| (grid.node(i), *p))
        .collect();
    let pick = |f: &dyn Fn(&SnapshotData) -> f64| traj.samples.iter().map(f).collect::<Vec<f64>>();

    let record = ExperimentRecord {
        protocol: protocol.clone(),
        times: traj.times.clone(),
        qubit_purity_series: pick(&|d| d.stats.report.qubit_purity),
        observer_purity_series: pick(&|d| d.stats.report.observer_purity),
        mean_x_series: pick(&|d| d.stats.report.mean_x),
        p_left_series: pick(&|d| d.stats.report.p_left),
        p_right_series: pick(&|d| d.stats.report.p_right),
        sigma_z_series: pick(&|d| d.sigma_z),
        energy_series: pick(&|d| d.energy),
        norm_series: pick(&|d| d.norm),
        redundancy_series: track_redundancy.then(|| pick(&|d| d.redundancy.unwrap_or(0.0))),
        final_report,
        final_distribution,
        wells,
        grid,
        redundancy,
        stats: traj.stats,
        provenance: Provenance {
            parameter_hash: protocol.parameter_hash(),
            env_seed: protocol.env_seed,
            code_version: CODE_VERSION.to_string(),
        },
    };
    Ok((record, traj.final_state))
}

pub fn run_protocol(protocol: &Protocol) -> Result<ExperimentRecord> {
    run_protocol_with(protocol, None, |_| Ok(())).map(|(r, _)| r)
}

/// Pass/fail of one classicality criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub value: f64,
    pub requirement: String,
    pub passed: bool,
}

impl CriterionResult {
    fn new(name: &str, value: f64, requirement: &str, passed: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            requirement: requirement.to_string(),
            passed,
        }
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {:.6} (require {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.requirement
        )
    }
}

pub const MAX_QUBIT_PURITY: f64 = 0.55;
pub const MIN_WINNING_POPULATION: f64 = 0.95;
pub const MAX_COHERENCE: f64 = 1e-3;
pub const MIN_OBSERVER_PURITY: f64 = 0.9;
pub const MAX_STABILITY: f64 = 0.2;
pub const MAX_MINIMUM_OFFSET: f64 = 0.3;

/// The six classicality criteria evaluated on a finished record.
pub fn classicality_criteria(record: &ExperimentRecord) -> Vec<CriterionResult> {
    let r = &record.final_report;
    let tilted = effective_potentials(&record.protocol.params);
    let offset = [tilted.global_min_plus, tilted.global_min_minus]
        .iter()
        .map(|m| (r.mean_x - m).abs())
        .fold(f64::INFINITY, f64::min);
    let stability = record.stability();
    vec![
        CriterionResult::new("qubit_purity", r.qubit_purity, "<= 0.55", r.qubit_purity <= MAX_QUBIT_PURITY),
        CriterionResult::new(
            "winning_well_population",
            r.winning_population(),
            ">= 0.95",
            r.winning_population() >= MIN_WINNING_POPULATION,
        ),
        CriterionResult::new("interwell_coherence", r.coherence, "< 1e-3", r.coherence < MAX_COHERENCE),
        CriterionResult::new("observer_purity", r.observer_purity, ">= 0.9", r.observer_purity >= MIN_OBSERVER_PURITY),
        CriterionResult::new(
            "stability_metric",
            stability.unwrap_or(f64::NAN),
            "< 0.2",
            stability.is_some_and(|s| s < MAX_STABILITY),
        ),
        CriterionResult::new(
            "mean_x_to_tilted_minimum",
            offset,
            "<= 0.3",
            offset <= MAX_MINIMUM_OFFSET,
        ),
    ]
}

#[derive(Debug, Clone)]
pub struct FullModelOutcome {
    pub record: ExperimentRecord,
    pub criteria: Vec<CriterionResult>,
}

impl FullModelOutcome {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    /// Well selected by the observer at the end of the run.
    pub fn outcome(&self) -> &'static str {
        if self.record.final_report.p_left >= self.record.final_report.p_right {
            "left"
        } else {
            "right"
        }
    }
}

/// Full-model run checked against the classicality criteria. Criteria
/// failures are reported, not raised.
pub fn run_full_model(protocol: &Protocol) -> Result<FullModelOutcome> {
    if protocol.params.n_env() < 8 {
        return Err(Error::Config(format!(
            "full model requires N_E >= 8, got {}",
            protocol.params.n_env()
        )));
    }
    if protocol.mask != TermMask::ALL {
        return Err(Error::Config("full model requires every Hamiltonian term".into()));
    }
    let record = run_protocol(protocol)?;
    let criteria = classicality_criteria(&record);
    Ok(FullModelOutcome { record, criteria })
}

/// Which well one seed ends up in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub seed: u64,
    pub outcome: String,
    pub p_left: f64,
    pub p_right: f64,
    pub mean_x: f64,
}

/// Runs `protocol` once per environment seed and tallies the final well.
/// The tally is descriptive output only.
pub fn seed_sweep(protocol: &Protocol, seeds: impl IntoIterator<Item = u64>) -> Result<Vec<SweepEntry>> {
    seeds
        .into_iter()
        .map(|seed| {
            let mut p = protocol.clone();
            p.env_seed = seed;
            let r = run_protocol(&p)?.final_report;
            Ok(SweepEntry {
                seed,
                outcome: if r.p_left >= r.p_right { "left" } else { "right" }.to_string(),
                p_left: r.p_left,
                p_right: r.p_right,
                mean_x: r.mean_x,
            })
        })
        .collect()
}

/// Small-model Krylov vs dense comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub n_env: usize,
    pub grid_points: usize,
    pub t: f64,
    pub fidelity: f64,
    pub vector_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtStudyEntry {
    pub dt: f64,
    pub steps: usize,
    /// `1 − |<ψ_dt|ψ_exact>|²`.
    pub fidelity_deficit: f64,
    pub vector_error: f64,
    /// `n_steps × tolerance`, the accumulated local error budget.
    pub error_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStudy {
    pub coarse_points: usize,
    pub fine_points: usize,
    pub mean_x_coarse: f64,
    pub mean_x_fine: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub krylov_vs_dense: OracleComparison,
    pub dt_study: Vec<DtStudyEntry>,
    pub grid_study: Option<GridStudy>,
    pub passed: bool,
}

/// Parameters for the reduced-size verification problems. Small grids
/// need a narrower box so that the wells stay resolved.
pub fn small_model(n_env: usize, grid_points: usize, half_width: f64) -> PhysicalParams {
    let mut p = PhysicalParams::defaults(n_env);
    p.grid_points = grid_points;
    p.grid_half_width = half_width;
    p
}

fn small_protocol(params: PhysicalParams, t_final: f64, dt: f64) -> Protocol {
    let mut proto = Protocol::preset(ProtocolKind::FullModel);
    proto.params = params;
    proto.prop.t_final = t_final;
    proto.prop.dt = dt;
    proto.prop.record_stride = usize::MAX / 2;
    proto
}

/// Qubit superposition times a seeded Haar product over bath and observer.
/// Small verification grids cannot hold the barrier-top Gaussian, and a
/// generic observer state exercises every eigenmode anyway.
fn verification_state(proto: &Protocol, layout: Arc<SpaceLayout>) -> Result<StateVector> {
    let n_env = proto.params.n_env();
    let mut specs = Vec::with_capacity(n_env + 2);
    specs.push(FactorSpec::Amplitudes(proto.qubit_init.to_vec()));
    specs.extend(std::iter::repeat_n(FactorSpec::Haar, n_env + 1));
    random_product_state(layout, proto.env_seed, &specs)
}

/// Krylov propagation against exact diagonalization for a small universe.
pub fn krylov_vs_dense(params: &PhysicalParams, t: f64, dt: f64) -> Result<OracleComparison> {
    let proto = small_protocol(params.clone(), t, dt);
    proto.prop.validate()?;
    let layout = Arc::new(params.layout()?);
    let ham = build_total_hamiltonian(params, layout.clone(), TermMask::ALL)?;
    let psi0 = verification_state(&proto, layout.clone())?;
    let dense = kron_assemble(&layout, &ham.product_terms())?;
    let exact = dense_reference_evolve(&psi0, &dense, t)?;
    let traj = evolve_from(psi0, 0, ham.operator(), &proto.prop, |_| Ok(()))?;
    Ok(OracleComparison {
        n_env: params.n_env(),
        grid_points: params.grid_points,
        t,
        fidelity: traj.final_state.fidelity(&exact),
        vector_error: traj.final_state.distance(&exact),
    })
}

/// Final-state error against the dense propagator for several timesteps.
pub fn dt_study(params: &PhysicalParams, t: f64, dts: &[f64]) -> Result<Vec<DtStudyEntry>> {
    let layout = Arc::new(params.layout()?);
    let ham = build_total_hamiltonian(params, layout.clone(), TermMask::ALL)?;
    let base = small_protocol(params.clone(), t, dts[0]);
    let psi0 = verification_state(&base, layout.clone())?;
    let dense = kron_assemble(&layout, &ham.product_terms())?;
    let exact = dense_reference_evolve(&psi0, &dense, t)?;
    dts.iter()
        .map(|&dt| {
            let proto = small_protocol(params.clone(), t, dt);
            let traj = evolve_from(psi0.clone(), 0, ham.operator(), &proto.prop, |_| Ok(()))?;
            Ok(DtStudyEntry {
                dt,
                steps: proto.prop.n_steps(),
                fidelity_deficit: (1.0 - traj.final_state.fidelity(&exact)).max(0.0),
                vector_error: traj.final_state.distance(&exact),
                error_budget: proto.prop.n_steps() as f64 * proto.prop.tolerance,
            })
        })
        .collect()
}

/// Final `⟨x⟩` of the default full model on two grid resolutions.
pub fn grid_study(coarse: usize, fine: usize) -> Result<GridStudy> {
    let run = |points: usize| -> Result<f64> {
        let mut proto = Protocol::preset(ProtocolKind::FullModel);
        proto.params.grid_points = points;
        proto.prop.record_stride = proto.prop.n_steps();
        let layout = Arc::new(proto.layout()?);
        let ham = build_total_hamiltonian(&proto.params, layout.clone(), proto.mask)?;
        let psi0 = prepare_initial_state(&proto, layout)?;
        let grid = proto.params.grid();
        let traj = evolve_from(psi0, 0, ham.operator(), &proto.prop, |_| Ok(()))?;
        let rho = partial_trace(&traj.final_state, &[observer_factor(proto.params.n_env())])?;
        Ok((0..points).map(|i| rho.matrix()[(i, i)].re * grid.node(i)).sum())
    };
    let mean_x_coarse = run(coarse)?;
    let mean_x_fine = run(fine)?;
    Ok(GridStudy {
        coarse_points: coarse,
        fine_points: fine,
        mean_x_coarse,
        mean_x_fine,
        difference: (mean_x_coarse - mean_x_fine).abs(),
    })
}

pub const ORACLE_FIDELITY_DEFICIT: f64 = 1e-9;
pub const GRID_REFINEMENT_TOLERANCE: f64 = 0.05;

/// Krylov vs dense (N_E = 2, N_x = 16, t = 5), dt self-convergence
/// (N_E = 3, N_x = 32) and optionally the 128 → 256 grid refinement.
pub fn convergence_suite(include_grid_study: bool) -> Result<ConvergenceReport> {
    let krylov = krylov_vs_dense(&small_model(2, 16, 2.4), 5.0, 0.01)?;
    let dts = dt_study(&small_model(3, 32, 4.8), 2.0, &[0.02, 0.01, 0.005])?;
    let grid = if include_grid_study {
        Some(grid_study(128, 256)?)
    } else {
        None
    };
    let passed = krylov.fidelity > 1.0 - ORACLE_FIDELITY_DEFICIT
        && dts.iter().all(|e| e.vector_error <= e.error_budget)
        && grid.as_ref().is_none_or(|g| g.difference < GRID_REFINEMENT_TOLERANCE);
    Ok(ConvergenceReport {
        krylov_vs_dense: krylov,
        dt_study: dts,
        grid_study: grid,
        passed,
    })
}
