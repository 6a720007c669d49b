//! Krylov–Lanczos time propagation of the global state, plus a dense
//! eigendecomposition reference used to validate it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::tensorspace::{OperatorSum, StateVector, C64, MAX_DENSE_REDUCED_DIM};

/// Deepest internal step subdivision: the smallest sub-step is `dt / 64`.
const MAX_HALVINGS: u32 = 6;
/// Relative overlap above which a new Lanczos vector is reorthogonalized.
const REORTH_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub krylov_dim: usize,
    pub tolerance: f64,
    pub t_final: f64,
    pub record_stride: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            krylov_dim: 30,
            tolerance: 1e-10,
            t_final: 2.0,
            record_stride: 100,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(2..=100).contains(&self.krylov_dim) {
            return Err(Error::Config(format!(
                "krylov_dim must lie in [2, 100], got {}",
                self.krylov_dim
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-4) {
            return Err(Error::Config(format!(
                "tolerance must lie in (0, 1e-4], got {}",
                self.tolerance
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "t_final = {} is not an integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn is_snapshot_step(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_stride) || step == self.n_steps()
    }
}

/// Diagnostics of a single propagation step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub matvecs: usize,
    /// Number of Krylov solves that made up the step (1 unless dt was split).
    pub substeps: usize,
    pub max_error_estimate: f64,
    pub norm_change: f64,
}

/// Reusable Lanczos storage.
#[derive(Debug, Default)]
struct Workspace {
    basis: Vec<Vec<C64>>,
    w: Vec<C64>,
}

/// Stateful Krylov integrator; reuses its basis storage across steps.
#[derive(Debug)]
pub struct KrylovPropagator {
    krylov_dim: usize,
    tolerance: f64,
    ws: Workspace,
}

enum Attempt {
    Converged { matvecs: usize, error: f64 },
    NotConverged { matvecs: usize, error: f64 },
}

/// `exp(−i τ T) e_1` for the real symmetric tridiagonal `T`.
fn tridiagonal_exp_e1(alphas: &[f64], betas: &[f64], tau: f64) -> DVector<C64> {
    let m = alphas.len();
    let t = DMatrix::<f64>::from_fn(m, m, |r, c| {
        if r == c {
            alphas[r]
        } else if r + 1 == c {
            betas[r]
        } else if c + 1 == r {
            betas[c]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    DVector::<C64>::from_fn(m, |r, _| {
        (0..m).fold(C64::new(0.0, 0.0), |acc, k| {
            let q = eig.eigenvectors[(r, k)] * eig.eigenvectors[(0, k)];
            acc + C64::from_polar(q, -tau * eig.eigenvalues[k])
        })
    })
}

impl KrylovPropagator {
    pub fn new(config: &PropagatorConfig) -> Self {
        Self {
            krylov_dim: config.krylov_dim,
            tolerance: config.tolerance,
            ws: Workspace::default(),
        }
    }

    /// One Lanczos solve over `tau`; on success `psi` is overwritten.
    fn attempt(&mut self, h: &OperatorSum, psi: &mut [C64], tau: f64) -> Attempt {
        let n = psi.len();
        let beta0 = par::norm_sqr(psi).sqrt();
        if beta0 == 0.0 {
            return Attempt::Converged { matvecs: 0, error: 0.0 };
        }
        let m = self.krylov_dim;
        let ws = &mut self.ws;
        if ws.basis.len() < m {
            ws.basis.resize_with(m, Vec::new);
        }
        for v in ws.basis.iter_mut().take(m) {
            v.resize(n, C64::new(0.0, 0.0));
        }
        ws.w.resize(n, C64::new(0.0, 0.0));

        let inv = C64::new(1.0 / beta0, 0.0);
        for (v, p) in ws.basis[0].iter_mut().zip(psi.iter()) {
            *v = p * inv;
        }
        let mut alphas: Vec<f64> = Vec::with_capacity(m);
        let mut betas: Vec<f64> = Vec::with_capacity(m);
        let mut matvecs = 0;
        let mut last_error = f64::INFINITY;

        for j in 0..m {
            h.apply_into(&ws.basis[j], &mut ws.w);
            matvecs += 1;
            let alpha = par::inner(&ws.basis[j], &ws.w).re;
            par::axpy(C64::new(-alpha, 0.0), &ws.basis[j], &mut ws.w);
            if j > 0 {
                par::axpy(C64::new(-betas[j - 1], 0.0), &ws.basis[j - 1], &mut ws.w);
            }
            let mut wnorm = par::norm_sqr(&ws.w).sqrt();
            let overlaps: Vec<C64> = (0..=j).map(|k| par::inner(&ws.basis[k], &ws.w)).collect();
            let drift = overlaps.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if wnorm > 0.0 && drift > REORTH_THRESHOLD * wnorm {
                for (k, c) in overlaps.iter().enumerate() {
                    par::axpy(-c, &ws.basis[k], &mut ws.w);
                }
                wnorm = par::norm_sqr(&ws.w).sqrt();
            }
            alphas.push(alpha);

            // Invariant subspace reached: the projected exponential is exact.
            let scale = alphas.iter().map(|a| a.abs()).chain(betas.iter().copied()).fold(1.0, f64::max);
            let breakdown = wnorm <= 1e-13 * scale;

            let y = tridiagonal_exp_e1(&alphas, &betas, tau);
            let error = if breakdown {
                0.0
            } else {
                beta0 * wnorm * y[j].norm()
            };
            last_error = error;

            if breakdown || error < self.tolerance {
                if j == 0 {
                    // Eigenvector of H: pure phase, applied in place.
                    let phase = C64::from_polar(1.0, -tau * alpha);
                    if phase != C64::new(1.0, 0.0) {
                        par::scale(phase, psi);
                    }
                } else {
                    psi.fill(C64::new(0.0, 0.0));
                    for (k, yk) in y.iter().enumerate() {
                        par::axpy(yk * beta0, &ws.basis[k], psi);
                    }
                }
                return Attempt::Converged { matvecs, error };
            }
            if j + 1 == m {
                break;
            }
            betas.push(wnorm);
            let inv = C64::new(1.0 / wnorm, 0.0);
            let (_, tail) = ws.basis.split_at_mut(j + 1);
            for (v, w) in tail[0].iter_mut().zip(ws.w.iter()) {
                *v = w * inv;
            }
        }
        Attempt::NotConverged {
            matvecs,
            error: last_error,
        }
    }

    fn advance(&mut self, h: &OperatorSum, psi: &mut Vec<C64>, tau: f64, depth: u32, report: &mut StepReport) -> Result<()> {
        let backup = psi.clone();
        match self.attempt(h, psi, tau) {
            Attempt::Converged { matvecs, error } => {
                report.matvecs += matvecs;
                report.substeps += 1;
                report.max_error_estimate = report.max_error_estimate.max(error);
                Ok(())
            }
            Attempt::NotConverged { matvecs, error } => {
                report.matvecs += matvecs;
                *psi = backup;
                if depth >= MAX_HALVINGS {
                    return Err(Error::NumericalBreakdown(format!(
                        "Krylov step did not converge at dt = {tau:e} (krylov_dim = {}, error estimate {error:e}, tolerance {:e})",
                        self.krylov_dim, self.tolerance
                    )));
                }
                self.advance(h, psi, tau / 2.0, depth + 1, report)?;
                self.advance(h, psi, tau / 2.0, depth + 1, report)
            }
        }
    }

    /// Replaces `state` by `exp(−i H dt) state`. No renormalization is applied.
    pub fn step(&mut self, h: &OperatorSum, state: &mut StateVector, dt: f64) -> Result<StepReport> {
        let before = state.norm();
        let mut report = StepReport::default();
        let mut psi = std::mem::take(state.amplitudes_vec_mut());
        let res = self.advance(h, &mut psi, dt, 0, &mut report);
        *state.amplitudes_vec_mut() = psi;
        res?;
        report.norm_change = state.norm() - before;
        Ok(report)
    }
}

/// Approximates `exp(−i H dt)|ψ⟩` with a fresh integrator.
pub fn krylov_step(state: &StateVector, h: &OperatorSum, dt: f64, config: &PropagatorConfig) -> Result<StateVector> {
    let mut out = state.clone();
    KrylovPropagator::new(config).step(h, &mut out, dt)?;
    Ok(out)
}

/// Aggregate diagnostics of an [`evolve`] run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStats {
    pub steps: usize,
    pub matvecs: usize,
    pub substeps: usize,
    pub max_error_estimate: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
}

impl EvolutionStats {
    pub fn norm_drift(&self) -> f64 {
        (self.final_norm - self.initial_norm).abs()
    }
}

/// A recorded point of an evolution.
#[derive(Debug)]
pub struct Snapshot<'a> {
    pub index: usize,
    pub step: usize,
    pub time: f64,
    pub state: &'a StateVector,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub samples: Vec<T>,
    pub final_state: StateVector,
    pub stats: EvolutionStats,
}

/// Evolves from `t = 0` to `t_final`, calling `probe` at every snapshot.
pub fn evolve<T, F>(initial: StateVector, h: &OperatorSum, config: &PropagatorConfig, probe: F) -> Result<Trajectory<T>>
where
    F: FnMut(&Snapshot<'_>) -> Result<T>,
{
    evolve_from(initial, 0, h, config, probe)
}

/// Like [`evolve`] but starting from `start_step` (resume support). The
/// starting point itself is recorded as the first snapshot.
pub fn evolve_from<T, F>(
    initial: StateVector,
    start_step: usize,
    h: &OperatorSum,
    config: &PropagatorConfig,
    mut probe: F,
) -> Result<Trajectory<T>>
where
    F: FnMut(&Snapshot<'_>) -> Result<T>,
{
    config.validate()?;
    let n_steps = config.n_steps();
    if start_step > n_steps {
        return Err(Error::Config(format!(
            "start step {start_step} beyond final step {n_steps}"
        )));
    }
    let mut state = initial;
    let mut stats = EvolutionStats {
        initial_norm: state.norm(),
        ..Default::default()
    };
    let mut integrator = KrylovPropagator::new(config);
    let mut times = Vec::new();
    let mut samples = Vec::new();
    let snapshot_index = |step: usize| step.div_ceil(config.record_stride);

    let mut record = |step: usize, state: &StateVector, times: &mut Vec<f64>, samples: &mut Vec<T>| -> Result<()> {
        let time = step as f64 * config.dt;
        let snap = Snapshot {
            index: snapshot_index(step),
            step,
            time,
            state,
        };
        samples.push(probe(&snap)?);
        times.push(time);
        Ok(())
    };

    record(start_step, &state, &mut times, &mut samples)?;
    for step in start_step + 1..=n_steps {
        let r = integrator.step(h, &mut state, config.dt)?;
        stats.steps += 1;
        stats.matvecs += r.matvecs;
        stats.substeps += r.substeps;
        stats.max_error_estimate = stats.max_error_estimate.max(r.max_error_estimate);
        if config.is_snapshot_step(step) {
            record(step, &state, &mut times, &mut samples)?;
        }
    }
    stats.final_norm = state.norm();
    Ok(Trajectory {
        times,
        samples,
        final_state: state,
        stats,
    })
}

/// Exact propagation `exp(−i H t)|ψ⟩` by full Hermitian eigendecomposition.
pub fn dense_reference_evolve(state: &StateVector, h: &DMatrix<C64>, t: f64) -> Result<StateVector> {
    let n = state.layout().total_dim();
    if n > MAX_DENSE_REDUCED_DIM {
        return Err(Error::Resource(format!(
            "dense propagation of dimension {n} exceeds limit {MAX_DENSE_REDUCED_DIM}"
        )));
    }
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::Config(format!(
            "dense Hamiltonian is {}x{}, state has dimension {n}",
            h.nrows(),
            h.ncols()
        )));
    }
    let eig = h.clone().symmetric_eigen();
    let psi = DVector::from_column_slice(state.amplitudes());
    let mut coeffs = eig.eigenvectors.adjoint() * psi;
    for (c, e) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= C64::from_polar(1.0, -t * e);
    }
    let out = &eig.eigenvectors * coeffs;
    StateVector::from_amplitudes(state.layout().clone(), out.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorspace::{kron_assemble, ProductTerm, SiteOperator, SpaceLayout};
    use std::sync::Arc;

    fn qubit_layout() -> Arc<SpaceLayout> {
        Arc::new(SpaceLayout::new(vec![2]).unwrap())
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let l = Arc::new(SpaceLayout::new(vec![2, 3]).unwrap());
        let amps: Vec<C64> = (0..6).map(|i| C64::new(0.1 * i as f64, 0.3 - 0.05 * i as f64)).collect();
        let mut psi = StateVector::from_amplitudes(l.clone(), amps).unwrap();
        psi.normalize().unwrap();
        let h = OperatorSum::new(l, &[]).unwrap();
        let out = krylov_step(&psi, &h, 0.7, &PropagatorConfig::default()).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn sigma_z_half_turn() {
        let l = qubit_layout();
        let h = OperatorSum::new(l.clone(), &[ProductTerm::new(1.0, vec![(0, SiteOperator::sigma_z())]).unwrap()]).unwrap();
        let cfg = PropagatorConfig::default();
        let dt = std::f64::consts::PI / 2.0;
        // |0⟩ → e^{−iπ/2}|0⟩
        let zero = StateVector::basis(l.clone(), 0).unwrap();
        let out = krylov_step(&zero, &h, dt, &cfg).unwrap();
        assert!((out.amplitudes()[0] - C64::new(0.0, -1.0)).norm() < 1e-12);
        // |+⟩ → |−⟩ up to a global phase
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::from_amplitudes(l.clone(), vec![C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap();
        let minus = StateVector::from_amplitudes(l, vec![C64::new(s, 0.0), C64::new(-s, 0.0)]).unwrap();
        let out = krylov_step(&plus, &h, dt, &cfg).unwrap();
        assert!((out.fidelity(&minus) - 1.0).abs() < 1e-12);
        // dt = π: full phase e^{∓iπ}
        let out = krylov_step(&plus, &h, std::f64::consts::PI, &cfg).unwrap();
        assert!((out.fidelity(&plus) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_identity_and_reversal() {
        let l = Arc::new(SpaceLayout::new(vec![2, 4]).unwrap());
        let amps: Vec<C64> = (0..8).map(|i| C64::new((i as f64).cos(), (i as f64 * 0.4).sin())).collect();
        let mut psi = StateVector::from_amplitudes(l.clone(), amps).unwrap();
        psi.normalize().unwrap();
        let id = DMatrix::<C64>::identity(8, 8);
        let out = dense_reference_evolve(&psi, &id, 1.3).unwrap();
        let phase = C64::from_polar(1.0, -1.3);
        assert!(out.distance(&psi.clone().scaled(phase)) < 1e-12);

        let terms = vec![
            ProductTerm::new(0.4, vec![(0, SiteOperator::sigma_x())]).unwrap(),
            ProductTerm::new(
                1.1,
                vec![
                    (0, SiteOperator::sigma_z()),
                    (1, SiteOperator::tridiagonal(vec![0.0, 1.0, 2.0, 3.0], vec![0.5, 0.5, 0.5]).unwrap()),
                ],
            )
            .unwrap(),
        ];
        let h = kron_assemble(&l, &terms).unwrap();
        let fwd = dense_reference_evolve(&psi, &h, 2.5).unwrap();
        let back = dense_reference_evolve(&fwd, &h, -2.5).unwrap();
        assert!(back.distance(&psi) < 1e-12);
    }

    #[test]
    fn dense_reference_rejects_large_dimension() {
        let l = Arc::new(SpaceLayout::new(vec![2, 4096]).unwrap());
        let psi = StateVector::basis(l, 0).unwrap();
        let h = DMatrix::<C64>::zeros(1, 1);
        assert!(matches!(dense_reference_evolve(&psi, &h, 1.0), Err(Error::Resource(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = PropagatorConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.n_steps(), 200);
        c.krylov_dim = 1;
        assert!(c.validate().is_err());
        c.krylov_dim = 30;
        c.tolerance = 1e-3;
        assert!(c.validate().is_err());
        c.tolerance = 1e-10;
        c.t_final = 0.015;
        assert!(c.validate().is_err());
        c.t_final = 0.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn zero_duration_gives_single_snapshot() {
        let l = qubit_layout();
        let h = OperatorSum::new(l.clone(), &[ProductTerm::new(1.0, vec![(0, SiteOperator::sigma_x())]).unwrap()]).unwrap();
        let psi = StateVector::basis(l, 0).unwrap();
        let cfg = PropagatorConfig {
            t_final: 0.0,
            ..Default::default()
        };
        let traj = evolve(psi.clone(), &h, &cfg, |s| Ok(s.time)).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.final_state, psi);
    }

    #[test]
    fn small_krylov_space_forces_step_splitting() {
        let l = Arc::new(SpaceLayout::new(vec![64]).unwrap());
        let diag: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let h = OperatorSum::new(
            l.clone(),
            &[ProductTerm::new(1.0, vec![(0, SiteOperator::tridiagonal(diag, vec![3.0; 63]).unwrap())]).unwrap()],
        )
        .unwrap();
        let mut psi = StateVector::from_amplitudes(l.clone(), vec![C64::new(1.0, 0.0); 64]).unwrap();
        psi.normalize().unwrap();
        let cfg = PropagatorConfig {
            krylov_dim: 12,
            ..Default::default()
        };
        let mut prop = KrylovPropagator::new(&cfg);
        let mut out = psi.clone();
        let report = prop.step(&h, &mut out, 0.5).unwrap();
        assert!(report.substeps > 1);
        let dense = kron_assemble(&l, &[ProductTerm::new(1.0, vec![(0, SiteOperator::tridiagonal((0..64).map(|i| i as f64).collect(), vec![3.0; 63]).unwrap())]).unwrap()]).unwrap();
        let exact = dense_reference_evolve(&psi, &dense, 0.5).unwrap();
        assert!(out.distance(&exact) < 1e-8);

        // Impossible target: too few vectors even at dt/64.
        let cfg = PropagatorConfig {
            krylov_dim: 2,
            ..Default::default()
        };
        let r = krylov_step(&psi, &h, 50.0, &cfg);
        assert!(matches!(r, Err(Error::NumericalBreakdown(_))));
    }
}
